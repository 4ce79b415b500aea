//! Dense row-major matrices and the small-matrix linear algebra the rest of
//! the crate needs (multiplication, symmetric eigendecomposition, QR-style
//! orthonormalization).
//!
//! Elementwise/product helpers panic on dimension mismatch, mirroring the
//! convention of mainstream array crates; operations with contracts defined
//! at the library surface return `Result` instead.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{CoreError, Result};

/// Dense matrix of 64-bit floats, row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for c in 0..self.cols.min(8) {
                write!(f, "{:10.4} ", self.get(r, c))?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(CoreError::InvalidArgument {
                op: "Matrix::new",
                message: alloc::format!("dimensions must be positive, got {rows}x{cols}"),
            });
        }
        if rows * cols != data.len() {
            return Err(CoreError::ShapeMismatch {
                op: "Matrix::new",
                expected: alloc::format!("{} elements", rows * cols),
                got: alloc::format!("{}", data.len()),
                mode: None,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds from nested rows; all rows must share a length.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        assert!(!rows.is_empty(), "from_rows: no rows");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "from_rows: ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
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

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// `self * other`. Panics on inner-dimension mismatch.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow.iter()) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// Matrix-vector product `self * v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec: dimension mismatch");
        let mut out = vec![0.0; self.rows];
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(v.iter()) {
                acc += a * b;
            }
            *o = acc;
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "add: shape");
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a + b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "sub: shape");
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a - b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|a| a * a).sum())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                if libm::fabs(self.get(r, c) - self.get(c, r)) > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_identity(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        for r in 0..self.rows {
            for c in 0..self.cols {
                let want = if r == c { 1.0 } else { 0.0 };
                if self.get(r, c) != want {
                    return false;
                }
            }
        }
        true
    }

    /// Kronecker product `self (x) other`: block (i,j) is `self[i,j] * other`.
    pub fn kronecker(&self, other: &Matrix) -> Matrix {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.data[i * self.cols + j];
                if a == 0.0 {
                    continue;
                }
                for r in 0..other.rows {
                    for c in 0..other.cols {
                        out.data[(i * other.rows + r) * cols + (j * other.cols + c)] =
                            a * other.data[r * other.cols + c];
                    }
                }
            }
        }
        out
    }
}

/// Eigendecomposition of a symmetric matrix: `a = V diag(values) V^T`.
///
/// Eigenpairs are sorted by descending eigenvalue; `vectors` holds the
/// eigenvectors as columns.
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Small-n workhorse behind the spectral oracle and HOSVD; quadratically
/// convergent and unconditionally stable on symmetric input.
pub fn sym_eigen(a: &Matrix) -> Result<SymEigen> {
    if !a.is_square() {
        return Err(CoreError::InvalidMatrix {
            op: "sym_eigen",
            message: alloc::format!("matrix is {}x{}, expected square", a.rows, a.cols),
        });
    }
    if !a.is_symmetric(1e-9 * (1.0 + a.frobenius_norm())) {
        return Err(CoreError::InvalidMatrix {
            op: "sym_eigen",
            message: alloc::string::String::from("matrix is not symmetric"),
        });
    }
    let n = a.rows;
    let mut m = a.clone();
    let mut v = Matrix::identity(n);

    let off = |m: &Matrix| -> f64 {
        let mut s = 0.0;
        for r in 0..n {
            for c in (r + 1)..n {
                let x = m.get(r, c);
                s += 2.0 * x * x;
            }
        }
        libm::sqrt(s)
    };

    let scale = a.frobenius_norm().max(1.0);
    let tol = 1e-14 * scale;
    let max_sweeps = 100;
    let mut sweeps = 0;
    while off(&m) > tol {
        sweeps += 1;
        if sweeps > max_sweeps {
            return Err(CoreError::NoConvergence {
                op: "sym_eigen",
                detail: alloc::format!("off-diagonal {} after {} sweeps", off(&m), max_sweeps),
            });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if libm::fabs(apq) <= tol / (n as f64) {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                // Apply the rotation on both sides of m and accumulate in v.
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m.get(j, j)
            .partial_cmp(&m.get(i, i))
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let values: Vec<f64> = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new_c, &old_c) in order.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, new_c, v.get(r, old_c));
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Orthonormalizes the columns of `a` in place via modified Gram-Schmidt with
/// one re-orthogonalization pass. Requires full column rank.
pub fn orthonormalize_columns(a: &mut Matrix) -> Result<()> {
    let (n, k) = (a.rows, a.cols);
    if k > n {
        return Err(CoreError::InvalidArgument {
            op: "orthonormalize_columns",
            message: alloc::format!("{k} columns cannot be orthonormal in dimension {n}"),
        });
    }
    let col = |a: &Matrix, j: usize| -> Vec<f64> { (0..n).map(|r| a.get(r, j)).collect() };
    for j in 0..k {
        let mut cj = col(a, j);
        for _pass in 0..2 {
            for i in 0..j {
                let ci = col(a, i);
                let dot: f64 = ci.iter().zip(cj.iter()).map(|(x, y)| x * y).sum();
                for (c, x) in cj.iter_mut().zip(ci.iter()) {
                    *c -= dot * x;
                }
            }
        }
        let norm = libm::sqrt(cj.iter().map(|x| x * x).sum());
        if norm < 1e-12 {
            return Err(CoreError::InvalidArgument {
                op: "orthonormalize_columns",
                message: alloc::string::String::from("rank deficient input"),
            });
        }
        for (r, x) in cj.iter().enumerate() {
            a.set(r, j, x / norm);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn random_symmetric(n: usize, rng: &mut SeededRng) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for r in 0..n {
            for c in r..n {
                let v = rng.normal();
                m.set(r, c, v);
                m.set(c, r, v);
            }
        }
        m
    }

    #[test]
    fn matmul_identity() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let i = Matrix::identity(2);
        assert_eq!(a.matmul(&i).data(), a.data());
        assert_eq!(i.matmul(&a).data(), a.data());
    }

    #[test]
    fn transpose_round_trip() {
        let a = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        assert_eq!(a.transpose().transpose().data(), a.data());
    }

    #[test]
    fn kronecker_identities() {
        let i2 = Matrix::identity(2);
        let i3 = Matrix::identity(3);
        assert!(i2.kronecker(&i3).is_identity());
    }

    #[test]
    fn jacobi_reconstructs() {
        let mut rng = SeededRng::new(17);
        for n in 2..=8 {
            let a = random_symmetric(n, &mut rng);
            let e = sym_eigen(&a).unwrap();
            // V diag(w) V^T == a
            let mut lam = Matrix::zeros(n, n);
            for i in 0..n {
                lam.set(i, i, e.values[i]);
            }
            let rec = e.vectors.matmul(&lam).matmul(&e.vectors.transpose());
            assert!(rec.max_abs_diff(&a) < 1e-10, "n={n}");
            // V^T V == I
            let g = e.vectors.transpose().matmul(&e.vectors);
            assert!(g.max_abs_diff(&Matrix::identity(n)) < 1e-10);
            // sorted descending
            for w in e.values.windows(2) {
                assert!(w[0] >= w[1] - 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_rejects_asymmetric() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(sym_eigen(&a).is_err());
    }

    #[test]
    fn gram_schmidt_orthonormal() {
        let mut rng = SeededRng::new(4);
        let mut a = Matrix::from_fn(6, 3, |_, _| rng.normal());
        orthonormalize_columns(&mut a).unwrap();
        let g = a.transpose().matmul(&a);
        assert!(g.max_abs_diff(&Matrix::identity(3)) < 1e-12);
    }
}
