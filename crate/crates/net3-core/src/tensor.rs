//! Dense multi-mode tensors and the tensor-algebra kernels built on them:
//! mode-m products, unfolding/folding, Kronecker products, HOSVD, norms and
//! feature concatenation.
//!
//! Layout is row-major with the last index fastest. The flat-graph
//! vectorization convention used throughout the crate is the opposite
//! enumeration (first mode fastest), which is exactly the ordering under
//! which applying `A_m` to every mode equals multiplying `vec(x)` by
//! `A_M (x) ... (x) A_1`; see [`DenseTensor::vectorize`].

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{shape_string, CoreError, Result};
use crate::matrix::Matrix;

/// Dense tensor of 64-bit floats with at least one mode.
#[derive(Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for DenseTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseTensor {} ", shape_string(&self.shape))?;
        if self.data.len() <= 16 {
            write!(f, "{:?}", self.data)
        } else {
            write!(f, "[{} values]", self.data.len())
        }
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(CoreError::InvalidArgument {
            op: "DenseTensor",
            message: alloc::string::String::from("tensor order must be at least 1"),
        });
    }
    let mut len = 1usize;
    for (m, &d) in shape.iter().enumerate() {
        if d == 0 {
            return Err(CoreError::InvalidArgument {
                op: "DenseTensor",
                message: alloc::format!("mode {m} has dimension 0"),
            });
        }
        len = len.checked_mul(d).ok_or(CoreError::InvalidArgument {
            op: "DenseTensor",
            message: alloc::string::String::from("shape overflows"),
        })?;
    }
    Ok(len)
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if len != data.len() {
            return Err(CoreError::ShapeMismatch {
                op: "DenseTensor::new",
                expected: alloc::format!("{len} elements for shape {}", shape_string(&shape)),
                got: alloc::format!("{}", data.len()),
                mode: None,
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = check_shape(shape).expect("invalid tensor shape");
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for k in 0..t.data.len() {
            t.data[k] = f(&idx);
            Self::advance(&mut idx, shape);
            let _ = k;
        }
        t
    }

    /// Order-2 convenience constructor from a matrix view.
    pub fn from_matrix(m: &Matrix) -> Self {
        Self {
            shape: vec![m.rows(), m.cols()],
            data: m.data().to_vec(),
        }
    }

    /// Order-2 tensors convert back to matrices.
    pub fn to_matrix(&self) -> Result<Matrix> {
        if self.order() != 2 {
            return Err(CoreError::InvalidArgument {
                op: "to_matrix",
                message: alloc::format!("tensor has order {}, expected 2", self.order()),
            });
        }
        Matrix::new(self.shape[0], self.shape[1], self.data.clone())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row-major linear offset of a multi-index (last index fastest).
    #[inline]
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0usize;
        for (i, &d) in idx.iter().zip(self.shape.iter()) {
            debug_assert!(*i < d);
            off = off * d + i;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let off = self.offset(idx);
        self.data[off] = v;
    }

    /// Advances a multi-index in row-major order (last index fastest).
    fn advance(idx: &mut [usize], shape: &[usize]) {
        for m in (0..shape.len()).rev() {
            idx[m] += 1;
            if idx[m] < shape[m] {
                return;
            }
            idx[m] = 0;
        }
    }

    /// Calls `f` for every multi-index in row-major order.
    pub fn for_each_index(shape: &[usize], mut f: impl FnMut(&[usize])) {
        let total: usize = shape.iter().product();
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..total {
            f(&idx);
            Self::advance(&mut idx, shape);
        }
    }

    // ------------------------------------------------------------------
    // Mode products and matricization
    // ------------------------------------------------------------------

    /// Mode-m unfolding: an `N_m x (prod of other dims)` matrix whose columns
    /// enumerate the remaining modes in row-major order.
    pub fn unfold(&self, mode: usize) -> Matrix {
        assert!(mode < self.order(), "unfold: mode {mode} out of range");
        let n_m = self.shape[mode];
        let rest: usize = self.len() / n_m;
        let mut out = Matrix::zeros(n_m, rest);
        // Walk the tensor once; for each element compute (row, col).
        let mut idx = vec![0usize; self.order()];
        for &v in &self.data {
            let row = idx[mode];
            let mut col = 0usize;
            for (m, (&i, &d)) in idx.iter().zip(self.shape.iter()).enumerate() {
                if m == mode {
                    continue;
                }
                col = col * d + i;
            }
            out.set(row, col, v);
            Self::advance(&mut idx, &self.shape);
        }
        out
    }

    /// Inverse of [`DenseTensor::unfold`]: rebuilds a tensor of `shape` from its mode-m
    /// unfolding. The matrix must be `shape[mode] x (prod of other dims)`.
    pub fn fold(mat: &Matrix, shape: &[usize], mode: usize) -> Result<Self> {
        let len = check_shape(shape)?;
        if mode >= shape.len() {
            return Err(CoreError::InvalidArgument {
                op: "fold",
                message: alloc::format!("mode {mode} out of range for order {}", shape.len()),
            });
        }
        let rest = len / shape[mode];
        if mat.rows() != shape[mode] || mat.cols() != rest {
            return Err(CoreError::ShapeMismatch {
                op: "fold",
                expected: alloc::format!("{}x{rest}", shape[mode]),
                got: alloc::format!("{}x{}", mat.rows(), mat.cols()),
                mode: Some(mode),
            });
        }
        let mut out = Self::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for k in 0..len {
            let row = idx[mode];
            let mut col = 0usize;
            for (m, (&i, &d)) in idx.iter().zip(shape.iter()).enumerate() {
                if m == mode {
                    continue;
                }
                col = col * d + i;
            }
            out.data[k] = mat.get(row, col);
            Self::advance(&mut idx, shape);
        }
        Ok(out)
    }

    /// Mode-m product with `u: N_m x N'`: contracts mode `m` against the rows
    /// of `u`, replacing its dimension by `u.cols()`.
    ///
    /// Element formula: `y[.., n', ..] = sum_n x[.., n, ..] * u[n, n']`.
    /// Routed through unfold/fold so that every mode product shares one
    /// tested matricization path.
    pub fn mode_product(&self, u: &Matrix, mode: usize) -> Result<Self> {
        if mode >= self.order() {
            return Err(CoreError::InvalidArgument {
                op: "mode_product",
                message: alloc::format!("mode {mode} out of range for order {}", self.order()),
            });
        }
        if u.rows() != self.shape[mode] {
            return Err(CoreError::ShapeMismatch {
                op: "mode_product",
                expected: alloc::format!("{} rows", self.shape[mode]),
                got: alloc::format!("{} rows", u.rows()),
                mode: Some(mode),
            });
        }
        let unfolded = self.unfold(mode);
        let product = u.transpose().matmul(&unfolded);
        let mut new_shape = self.shape.clone();
        new_shape[mode] = u.cols();
        Self::fold(&product, &new_shape, mode)
    }

    /// Applies several mode products `(mode, factor)`; the modes must be
    /// distinct. Application order does not affect the result.
    pub fn multi_mode_product(&self, factors: &[(usize, &Matrix)]) -> Result<Self> {
        for (i, (m, _)) in factors.iter().enumerate() {
            for (m2, _) in &factors[i + 1..] {
                if m == m2 {
                    return Err(CoreError::DuplicateMode(*m));
                }
            }
        }
        let mut out = self.clone();
        for (mode, u) in factors {
            out = out.mode_product(u, *mode)?;
        }
        Ok(out)
    }

    // ------------------------------------------------------------------
    // Decomposition
    // ------------------------------------------------------------------

    /// Higher-order SVD truncated to `ranks`.
    ///
    /// Factor `m` is `ranks[m] x N_m` with orthonormal rows (the leading left
    /// singular vectors of the mode-m unfolding, transposed); the core is
    /// `x` with every factor's transpose applied.
    pub fn hosvd(&self, ranks: &[usize]) -> Result<Tucker> {
        if ranks.len() != self.order() {
            return Err(CoreError::InvalidArgument {
                op: "hosvd",
                message: alloc::format!(
                    "{} ranks given for order {}",
                    ranks.len(),
                    self.order()
                ),
            });
        }
        for (m, (&r, &d)) in ranks.iter().zip(self.shape.iter()).enumerate() {
            if r == 0 || r > d {
                return Err(CoreError::RankTooLarge { mode: m, rank: r, dim: d });
            }
        }
        let mut factors = Vec::with_capacity(self.order());
        for (m, &r) in ranks.iter().enumerate() {
            let unfolded = self.unfold(m);
            // Left singular vectors from the Gram matrix of the unfolding.
            let gram = unfolded.matmul(&unfolded.transpose());
            let eig = crate::matrix::sym_eigen(&gram)?;
            let n = self.shape[m];
            let mut factor = Matrix::zeros(r, n);
            for row in 0..r {
                for c in 0..n {
                    factor.set(row, c, eig.vectors.get(c, row));
                }
            }
            factors.push(factor);
        }
        let mut core = self.clone();
        for (m, f) in factors.iter().enumerate() {
            core = core.mode_product(&f.transpose(), m)?;
        }
        Ok(Tucker { core, factors })
    }

    // ------------------------------------------------------------------
    // Norms, concatenation, vectorization
    // ------------------------------------------------------------------

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|a| a * a).sum())
    }

    /// Concatenates along the last mode; all other modes must match.
    pub fn concat_last(&self, other: &Self) -> Result<Self> {
        let m = self.order();
        if other.order() != m || self.shape[..m - 1] != other.shape[..m - 1] {
            return Err(CoreError::ShapeMismatch {
                op: "concat_last",
                expected: shape_string(&self.shape[..m - 1]),
                got: shape_string(&other.shape[..other.order().saturating_sub(1)]),
                mode: None,
            });
        }
        let da = self.shape[m - 1];
        let db = other.shape[m - 1];
        let prefixes = self.len() / da;
        let mut shape = self.shape.clone();
        shape[m - 1] = da + db;
        let mut data = Vec::with_capacity(self.len() + other.len());
        for p in 0..prefixes {
            data.extend_from_slice(&self.data[p * da..(p + 1) * da]);
            data.extend_from_slice(&other.data[p * db..(p + 1) * db]);
        }
        Ok(Self { shape, data })
    }

    /// Flattens with the FIRST mode fastest.
    ///
    /// Under this enumeration, applying `a_m` to every mode of `x` satisfies
    /// `vec(x prod_m x_m a_m) = (a_M^T (x) ... (x) a_1^T) vec(x)`; for the
    /// symmetric adjacencies used in graph convolution the transposes drop
    /// and the flat operator is literally `a_M (x) ... (x) a_1`.
    pub fn vectorize(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut idx = vec![0usize; self.order()];
        for &v in &self.data {
            let mut k = 0usize;
            for (&i, &d) in idx.iter().zip(self.shape.iter()).rev() {
                k = k * d + i;
            }
            out[k] = v;
            Self::advance(&mut idx, &self.shape);
        }
        out
    }

    /// Inverse of [`DenseTensor::vectorize`].
    pub fn from_vectorized(shape: &[usize], vec_data: &[f64]) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != vec_data.len() {
            return Err(CoreError::ShapeMismatch {
                op: "from_vectorized",
                expected: alloc::format!("{len}"),
                got: alloc::format!("{}", vec_data.len()),
                mode: None,
            });
        }
        let mut out = Self::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for slot in out.data.iter_mut() {
            let mut k = 0usize;
            for (&i, &d) in idx.iter().zip(shape.iter()).rev() {
                k = k * d + i;
            }
            *slot = vec_data[k];
            Self::advance(&mut idx, shape);
        }
        Ok(out)
    }

    // ------------------------------------------------------------------
    // Elementwise helpers
    // ------------------------------------------------------------------

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape, other.shape, "add: shape mismatch");
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a + b)
            .collect();
        Self {
            shape: self.shape.clone(),
            data,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.shape, other.shape, "sub: shape mismatch");
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a - b)
            .collect();
        Self {
            shape: self.shape.clone(),
            data,
        }
    }

    pub fn hadamard(&self, other: &Self) -> Self {
        assert_eq!(self.shape, other.shape, "hadamard: shape mismatch");
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .collect();
        Self {
            shape: self.shape.clone(),
            data,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&a| f(a)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max)
    }

    // ------------------------------------------------------------------
    // Shape adapters used by the model pipeline
    // ------------------------------------------------------------------

    /// Appends a trailing mode of size 1 (data unchanged).
    pub fn append_unit_mode(&self) -> Self {
        let mut shape = self.shape.clone();
        shape.push(1);
        Self {
            shape,
            data: self.data.clone(),
        }
    }

    /// Drops a trailing mode of size 1.
    pub fn squeeze_last(&self) -> Result<Self> {
        if self.order() < 2 || *self.shape.last().unwrap() != 1 {
            return Err(CoreError::InvalidArgument {
                op: "squeeze_last",
                message: alloc::format!(
                    "last mode must be 1 on an order >= 2 tensor, shape is {}",
                    shape_string(&self.shape)
                ),
            });
        }
        Ok(Self {
            shape: self.shape[..self.order() - 1].to_vec(),
            data: self.data.clone(),
        })
    }

    /// Extracts the slice at index `t` of the last mode (time slicing).
    pub fn index_last(&self, t: usize) -> Result<Self> {
        let last = *self.shape.last().unwrap();
        if t >= last {
            return Err(CoreError::InvalidArgument {
                op: "index_last",
                message: alloc::format!("index {t} out of range for last mode {last}"),
            });
        }
        if self.order() == 1 {
            return Self::new(vec![1], vec![self.data[t]]);
        }
        let shape = self.shape[..self.order() - 1].to_vec();
        let count: usize = shape.iter().product();
        let mut data = Vec::with_capacity(count);
        for p in 0..count {
            data.push(self.data[p * last + t]);
        }
        Ok(Self { shape, data })
    }
}

/// Result of a (truncated) HOSVD: `reconstruct()` applies every factor back.
pub struct Tucker {
    pub core: DenseTensor,
    pub factors: Vec<Matrix>,
}

impl Tucker {
    pub fn reconstruct(&self) -> Result<DenseTensor> {
        let mut out = self.core.clone();
        for (m, f) in self.factors.iter().enumerate() {
            out = out.mode_product(f, m)?;
        }
        Ok(out)
    }
}

/// Kronecker product of two matrices (re-exported here as the tensor-algebra
/// surface alongside the mode products it interacts with).
pub fn kronecker(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}
