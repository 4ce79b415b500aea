//! Crate-wide error type.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the library's fallible operations.
///
/// Shape errors carry the offending mode where one exists so that callers can
/// report which axis of a tensor/matrix pairing went wrong.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// A tensor or matrix dimension did not match what the operation needs.
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
        mode: Option<usize>,
    },
    /// The same mode was supplied twice to a multi-mode operation.
    DuplicateMode(usize),
    /// A requested Tucker rank exceeds the dimension of its mode.
    RankTooLarge { mode: usize, rank: usize, dim: usize },
    /// An argument was outside its legal range.
    InvalidArgument { op: &'static str, message: String },
    /// A matrix failed a structural validation (symmetry, nonnegativity, ...).
    InvalidMatrix { op: &'static str, message: String },
    /// Numerical routine failed to converge.
    NoConvergence { op: &'static str, detail: String },
    /// A metric was requested over an empty selection.
    EmptySelection { op: &'static str },
    /// Dataset-level inconsistency (values/mask/network shape pairing).
    DataInconsistency { message: String },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::ShapeMismatch {
                op,
                expected,
                got,
                mode,
            } => match mode {
                Some(m) => write!(
                    f,
                    "{op}: shape mismatch at mode {m}: expected {expected}, got {got}"
                ),
                None => write!(f, "{op}: shape mismatch: expected {expected}, got {got}"),
            },
            CoreError::DuplicateMode(m) => write!(f, "mode {m} supplied more than once"),
            CoreError::RankTooLarge { mode, rank, dim } => write!(
                f,
                "rank {rank} exceeds dimension {dim} of mode {mode}"
            ),
            CoreError::InvalidArgument { op, message } => write!(f, "{op}: {message}"),
            CoreError::InvalidMatrix { op, message } => write!(f, "{op}: {message}"),
            CoreError::NoConvergence { op, detail } => {
                write!(f, "{op}: failed to converge: {detail}")
            }
            CoreError::EmptySelection { op } => {
                write!(f, "{op}: selection is empty, metric undefined")
            }
            CoreError::DataInconsistency { message } => write!(f, "dataset: {message}"),
        }
    }
}

impl core::error::Error for CoreError {}

pub type Result<T> = core::result::Result<T, CoreError>;

/// Formats a shape as `a x b x c` for error messages.
pub(crate) fn shape_string(shape: &[usize]) -> String {
    let parts: Vec<String> = shape.iter().map(|d| alloc::format!("{d}")).collect();
    parts.join("x")
}
