//! Tucker dimension reduction, the tensor linear layer, the Tucker-compressed
//! LSTM cell, and the parameter-count arithmetic that justifies the
//! compression.
//!
//! The cell operates on core tensors: the node-embedding tensor is contracted
//! through learnable factor matrices `U_m` (one per mode, `N'_m x N_m`) into
//! a small core, the gated recurrence runs there, and the hidden state is
//! expanded back through the same factors. Orthonormality of the factors is
//! soft-enforced by a training penalty rather than projected exactly, so
//! reconstruction uses the factors as-is.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::matrix::{orthonormalize_columns, Matrix};
use crate::rng::SeededRng;
use crate::tensor::DenseTensor;

/// Core dimensions `N'_m = ceil(rho * N_m)`, clamped into `[1, N_m]`.
pub fn core_dims(rho: f64, dims: &[usize]) -> Result<Vec<usize>> {
    if rho <= 0.0 || !rho.is_finite() {
        return Err(CoreError::InvalidArgument {
            op: "core_dims",
            message: alloc::format!("interaction degree must be positive, got {rho}"),
        });
    }
    Ok(dims
        .iter()
        .map(|&n| {
            let raw = libm::ceil(rho * n as f64) as usize;
            raw.clamp(1, n)
        })
        .collect())
}

/// The per-mode factor matrices of the Tucker reduction; `factors[m]` is
/// `N'_m x N_m`. Reduction applies the transposes, reconstruction the
/// factors themselves.
#[derive(Clone, Debug)]
pub struct FactorSet {
    factors: Vec<Matrix>,
}

impl FactorSet {
    pub fn new(factors: Vec<Matrix>) -> Result<Self> {
        for (m, f) in factors.iter().enumerate() {
            if f.rows() > f.cols() {
                return Err(CoreError::InvalidArgument {
                    op: "FactorSet::new",
                    message: alloc::format!(
                        "factor {m} is {}x{}; core dimension may not exceed the mode dimension",
                        f.rows(),
                        f.cols()
                    ),
                });
            }
        }
        Ok(Self { factors })
    }

    /// Square identity factors: reduction and reconstruction become no-ops.
    pub fn identity(dims: &[usize]) -> Self {
        Self {
            factors: dims.iter().map(|&n| Matrix::identity(n)).collect(),
        }
    }

    /// Seeded orthonormal-row initialization for every mode.
    pub fn init(dims: &[usize], core: &[usize], rng: &mut SeededRng) -> Result<Self> {
        if dims.len() != core.len() {
            return Err(CoreError::InvalidArgument {
                op: "FactorSet::init",
                message: alloc::format!(
                    "{} core dims given for {} modes",
                    core.len(),
                    dims.len()
                ),
            });
        }
        let factors = dims
            .iter()
            .zip(core.iter())
            .map(|(&n, &np)| orthonormal_rows(np, n, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn factors_mut(&mut self) -> &mut [Matrix] {
        &mut self.factors
    }

    pub fn mode_count(&self) -> usize {
        self.factors.len()
    }

    pub fn full_dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.cols()).collect()
    }

    pub fn core_dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.rows()).collect()
    }

    /// `||U_m U_m^T - I||_F` per mode; drifts above 0 as training bends the
    /// factors away from orthonormality.
    pub fn orthonormality_residuals(&self) -> Vec<f64> {
        self.factors
            .iter()
            .map(|u| {
                let gram = u.matmul(&u.transpose());
                gram.sub(&Matrix::identity(u.rows())).frobenius_norm()
            })
            .collect()
    }
}

fn check_factor_shapes(
    op: &'static str,
    x: &DenseTensor,
    f: &FactorSet,
    expect_core: bool,
) -> Result<()> {
    if x.order() != f.mode_count() + 1 {
        return Err(CoreError::ShapeMismatch {
            op,
            expected: alloc::format!("order {} (modes + feature mode)", f.mode_count() + 1),
            got: alloc::format!("order {}", x.order()),
            mode: None,
        });
    }
    for (m, factor) in f.factors().iter().enumerate() {
        let want = if expect_core { factor.rows() } else { factor.cols() };
        if x.shape()[m] != want {
            return Err(CoreError::ShapeMismatch {
                op,
                expected: alloc::format!("{want}"),
                got: alloc::format!("{}", x.shape()[m]),
                mode: Some(m),
            });
        }
    }
    Ok(())
}

/// Contracts every non-feature mode through its factor transpose:
/// `z = h prod_m x_m U_m^T`, mapping `N_1 x ... x N_M x d` to
/// `N'_1 x ... x N'_M x d`.
pub fn reduce(h: &DenseTensor, f: &FactorSet) -> Result<DenseTensor> {
    check_factor_shapes("reduce", h, f, false)?;
    let mut out = h.clone();
    for (m, factor) in f.factors().iter().enumerate() {
        out = out.mode_product(&factor.transpose(), m)?;
    }
    Ok(out)
}

/// Expands a core tensor back to full dimensions: `r = y prod_m x_m U_m`.
pub fn reconstruct(y: &DenseTensor, f: &FactorSet) -> Result<DenseTensor> {
    check_factor_shapes("reconstruct", y, f, true)?;
    let mut out = y.clone();
    for (m, factor) in f.factors().iter().enumerate() {
        out = out.mode_product(factor, m)?;
    }
    Ok(out)
}

/// Tensor linear layer: `x prod_m x_m W_m + b` with one weight matrix per
/// mode including the feature mode, and a bias vector broadcast along the
/// feature mode.
pub fn tll_forward(x: &DenseTensor, weights: &[Matrix], bias: Option<&[f64]>) -> Result<DenseTensor> {
    if weights.len() != x.order() {
        return Err(CoreError::ShapeMismatch {
            op: "tll_forward",
            expected: alloc::format!("{} weight matrices", x.order()),
            got: alloc::format!("{}", weights.len()),
            mode: None,
        });
    }
    let mut out = x.clone();
    for (m, w) in weights.iter().enumerate() {
        out = out.mode_product(w, m)?;
    }
    if let Some(b) = bias {
        out = add_bias_last(&out, b)?;
    }
    Ok(out)
}

/// Adds `bias` to every fiber along the last mode.
pub fn add_bias_last(x: &DenseTensor, bias: &[f64]) -> Result<DenseTensor> {
    let d = *x.shape().last().unwrap();
    if bias.len() != d {
        return Err(CoreError::ShapeMismatch {
            op: "add_bias_last",
            expected: alloc::format!("bias of length {d}"),
            got: alloc::format!("{}", bias.len()),
            mode: Some(x.order() - 1),
        });
    }
    let mut out = x.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v += bias[i % d];
    }
    Ok(out)
}

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Which squashing the cell applies to its memory in the output equation.
/// `Logistic` is the wiring used throughout this crate's model; `Tanh` is the
/// conventional alternative, available behind this switch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellOutput {
    Logistic,
    Tanh,
}

impl CellOutput {
    fn apply(&self, x: f64) -> f64 {
        match self {
            CellOutput::Logistic => logistic(x),
            CellOutput::Tanh => libm::tanh(x),
        }
    }
}

/// One gate's two linear paths (input core and previous hidden state) plus
/// its bias.
#[derive(Clone, Debug)]
pub struct GateParams {
    /// Weights applied to the input core tensor: M square `N'_m x N'_m`
    /// matrices followed by the feature map `d x d'`.
    pub input: Vec<Matrix>,
    /// Weights applied to the previous hidden state: M square `N'_m x N'_m`
    /// matrices followed by the feature map `d' x d'`.
    pub state: Vec<Matrix>,
    /// Bias of length `d'`, shared by the gate's summed pre-activation.
    pub bias: Vec<f64>,
}

/// Gate index order used throughout: forget, input, output, candidate.
pub const GATE_FORGET: usize = 0;
pub const GATE_INPUT: usize = 1;
pub const GATE_OUTPUT: usize = 2;
pub const GATE_CANDIDATE: usize = 3;
pub const GATE_NAMES: [&str; 4] = ["f", "i", "o", "c"];

/// Parameters of the Tucker-core LSTM cell.
///
/// Both linear paths act on core-shaped tensors, so every mode weight is a
/// square `N'_m x N'_m` matrix; the input path maps `d` features to `d'`,
/// the state path `d'` to `d'`. One bias vector per gate. Total parameter
/// count: `4 d'(d + d' + 1) + 8 sum_m N'_m^2` (the factor matrices are owned
/// by [`FactorSet`] and counted separately).
#[derive(Clone, Debug)]
pub struct TlstmParams {
    pub gates: [GateParams; 4],
    core: Vec<usize>,
    d_in: usize,
    d_out: usize,
    pub cell_output: CellOutput,
}

impl TlstmParams {
    pub fn new(
        core: Vec<usize>,
        d_in: usize,
        d_out: usize,
        gates: [GateParams; 4],
        cell_output: CellOutput,
    ) -> Result<Self> {
        for (g, gate) in gates.iter().enumerate() {
            if gate.input.len() != core.len() + 1 || gate.state.len() != core.len() + 1 {
                return Err(CoreError::InvalidArgument {
                    op: "TlstmParams::new",
                    message: alloc::format!(
                        "gate {} needs {} weight matrices per path",
                        GATE_NAMES[g],
                        core.len() + 1
                    ),
                });
            }
            for (m, &np) in core.iter().enumerate() {
                for (path, w) in [("input", &gate.input[m]), ("state", &gate.state[m])] {
                    if w.rows() != np || w.cols() != np {
                        return Err(CoreError::ShapeMismatch {
                            op: "TlstmParams::new",
                            expected: alloc::format!("{np}x{np} ({path} path, gate {})", GATE_NAMES[g]),
                            got: alloc::format!("{}x{}", w.rows(), w.cols()),
                            mode: Some(m),
                        });
                    }
                }
            }
            let fin = &gate.input[core.len()];
            let fst = &gate.state[core.len()];
            if fin.rows() != d_in || fin.cols() != d_out || fst.rows() != d_out || fst.cols() != d_out
            {
                return Err(CoreError::ShapeMismatch {
                    op: "TlstmParams::new",
                    expected: alloc::format!("{d_in}x{d_out} and {d_out}x{d_out} feature maps"),
                    got: alloc::format!(
                        "{}x{} and {}x{}",
                        fin.rows(),
                        fin.cols(),
                        fst.rows(),
                        fst.cols()
                    ),
                    mode: None,
                });
            }
            if gate.bias.len() != d_out {
                return Err(CoreError::ShapeMismatch {
                    op: "TlstmParams::new",
                    expected: alloc::format!("bias length {d_out}"),
                    got: alloc::format!("{}", gate.bias.len()),
                    mode: None,
                });
            }
        }
        Ok(Self {
            gates,
            core,
            d_in,
            d_out,
            cell_output,
        })
    }

    /// Seeded init: input-path weights variance-preserving uniform,
    /// state-path weights orthogonal scaled by 0.1, biases zero except the
    /// forget gate's, which starts at 1.
    pub fn init(
        core: &[usize],
        d_in: usize,
        d_out: usize,
        cell_output: CellOutput,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let make_gate = |rng: &mut SeededRng, forget: bool| -> Result<GateParams> {
            let mut input = Vec::with_capacity(core.len() + 1);
            let mut state = Vec::with_capacity(core.len() + 1);
            for &np in core {
                let bound = libm::sqrt(3.0 / np as f64);
                input.push(Matrix::from_fn(np, np, |_, _| rng.uniform_in(-bound, bound)));
                state.push(orthonormal_rows(np, np, rng)?.scale(0.1));
            }
            let bound = libm::sqrt(6.0 / (d_in + d_out) as f64);
            input.push(Matrix::from_fn(d_in, d_out, |_, _| {
                rng.uniform_in(-bound, bound)
            }));
            state.push(orthonormal_rows(d_out, d_out, rng)?.scale(0.1));
            let bias = vec![if forget { 1.0 } else { 0.0 }; d_out];
            Ok(GateParams { input, state, bias })
        };
        let gates = [
            make_gate(rng, true)?,
            make_gate(rng, false)?,
            make_gate(rng, false)?,
            make_gate(rng, false)?,
        ];
        Self::new(core.to_vec(), d_in, d_out, gates, cell_output)
    }

    pub fn core(&self) -> &[usize] {
        &self.core
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }
}

/// Hidden and cell state of the recurrence, both core-shaped with `d'`
/// channels.
#[derive(Clone, Debug)]
pub struct TlstmState {
    pub y: DenseTensor,
    pub c: DenseTensor,
}

impl TlstmState {
    /// All-zeros state for a fresh window.
    pub fn zeros(core: &[usize], d_out: usize) -> Self {
        let mut shape = core.to_vec();
        shape.push(d_out);
        Self {
            y: DenseTensor::zeros(&shape),
            c: DenseTensor::zeros(&shape),
        }
    }
}

/// One step of the gated recurrence on core tensors.
///
/// Gates: `F, I, O = logistic(input TLL + state TLL + bias)`, candidate
/// `tanh(...)`; memory `C = F (.) C_prev + I (.) C~`; output
/// `Y = O (.) squash(C)` with the squash from `params.cell_output`
/// (logistic by default).
pub fn tlstm_step(
    z: &DenseTensor,
    prev: &TlstmState,
    params: &TlstmParams,
) -> Result<TlstmState> {
    let mut want = params.core.to_vec();
    want.push(params.d_in);
    if z.shape() != want.as_slice() {
        return Err(CoreError::ShapeMismatch {
            op: "tlstm_step",
            expected: crate::error::shape_string(&want),
            got: crate::error::shape_string(z.shape()),
            mode: None,
        });
    }
    let mut want_state = params.core.to_vec();
    want_state.push(params.d_out);
    if prev.y.shape() != want_state.as_slice() || prev.c.shape() != want_state.as_slice() {
        return Err(CoreError::ShapeMismatch {
            op: "tlstm_step",
            expected: crate::error::shape_string(&want_state),
            got: crate::error::shape_string(prev.y.shape()),
            mode: None,
        });
    }

    let preact = |gate: &GateParams| -> Result<DenseTensor> {
        let from_input = tll_forward(z, &gate.input, None)?;
        let from_state = tll_forward(&prev.y, &gate.state, None)?;
        add_bias_last(&from_input.add(&from_state), &gate.bias)
    };
    let f = preact(&params.gates[GATE_FORGET])?.map(logistic);
    let i = preact(&params.gates[GATE_INPUT])?.map(logistic);
    let o = preact(&params.gates[GATE_OUTPUT])?.map(logistic);
    let c_tilde = preact(&params.gates[GATE_CANDIDATE])?.map(libm::tanh);

    let c = f.hadamard(&prev.c).add(&i.hadamard(&c_tilde));
    let squash = params.cell_output;
    let y = o.hadamard(&c.map(|v| squash.apply(v)));
    Ok(TlstmState { y, c })
}

// ---------------------------------------------------------------------
// Parameter counting
// ---------------------------------------------------------------------

/// Exact parameter count of the compressed cell at core dims
/// `ceil(rho * N_m)`: `4 d'(d + d' + 1) + 8 sum N'_m^2 + sum N'_m N_m`
/// (gate feature maps and biases, gate mode maps on both paths, factor
/// matrices).
pub fn count_params_tlstm(dims: &[usize], rho: f64, d: usize, d_out: usize) -> Result<u64> {
    let core = core_dims(rho, dims)?;
    let gate_feature = 4 * (d as u64 * d_out as u64 + d_out as u64 * d_out as u64 + d_out as u64);
    let mode_sq: u64 = core.iter().map(|&np| (np * np) as u64).sum::<u64>() * 8;
    let factors: u64 = core
        .iter()
        .zip(dims.iter())
        .map(|(&np, &n)| (np * n) as u64)
        .sum();
    Ok(gate_feature + mode_sq + factors)
}

/// Parameter count of one independent cell per series:
/// `4 d'(d + d' + 1) * prod N_m`.
pub fn count_params_mlstm(dims: &[usize], d: usize, d_out: usize) -> u64 {
    let per_cell = 4 * (d as u64 * d_out as u64 + d_out as u64 * d_out as u64 + d_out as u64);
    let series: u64 = dims.iter().map(|&n| n as u64).product();
    per_cell * series
}

/// Largest interaction degree at which the compressed cell is guaranteed to
/// use fewer parameters than per-series cells:
/// `sqrt((prod N_m - 1) d'(d + d' + 1) / (2 sum N_m^2) + 1/256) - 1/16`.
pub fn rho_upper_bound(dims: &[usize], d: usize, d_out: usize) -> f64 {
    let prod: f64 = dims.iter().map(|&n| n as f64).product();
    let sum_sq: f64 = dims.iter().map(|&n| (n * n) as f64).sum();
    let num = (prod - 1.0) * d_out as f64 * (d + d_out + 1) as f64;
    libm::sqrt(num / (2.0 * sum_sq) + 1.0 / 256.0) - 1.0 / 16.0
}

/// Parameter-count margin of the compressed cell under the exact real-valued
/// substitution `N'_m = rho * N_m` (no rounding): per-series total minus
/// compressed total. Positive exactly when `rho < rho_upper_bound`; the
/// integer counts from [`count_params_tlstm`] additionally pay a ceiling
/// penalty of up to one row/column per mode, which can flip the comparison
/// in a narrow band just below the bound.
pub fn param_reduction_margin(dims: &[usize], rho: f64, d: usize, d_out: usize) -> f64 {
    let gate_feature = 4.0 * d_out as f64 * (d + d_out + 1) as f64;
    let sum_sq: f64 = dims.iter().map(|&n| (n * n) as f64).sum();
    let tlstm = gate_feature + (8.0 * rho * rho + rho) * sum_sq;
    let prod: f64 = dims.iter().map(|&n| n as f64).product();
    let mlstm = gate_feature * prod;
    mlstm - tlstm
}

/// Seeded matrix with orthonormal rows (`n_prime <= n`), bit-identical for a
/// fixed seed.
pub fn orthonormal_init(n_prime: usize, n: usize, seed: u64) -> Result<Matrix> {
    let mut rng = SeededRng::new(seed);
    orthonormal_rows(n_prime, n, &mut rng)
}

/// Orthonormal-row matrix drawing from an existing generator.
pub fn orthonormal_rows(n_prime: usize, n: usize, rng: &mut SeededRng) -> Result<Matrix> {
    if n_prime > n {
        return Err(CoreError::InvalidArgument {
            op: "orthonormal_rows",
            message: alloc::format!("{n_prime} orthonormal rows impossible in dimension {n}"),
        });
    }
    let mut gauss = Matrix::from_fn(n, n_prime, |_, _| rng.normal());
    orthonormalize_columns(&mut gauss)?;
    Ok(gauss.transpose())
}
