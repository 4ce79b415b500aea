//! Per-mode adjacency handling for tensor graphs: validation, symmetric
//! normalization, Laplacians, Pearson-correlation adjacencies, Kronecker
//! flattening, and the Chebyshev matrix polynomials together with the
//! eigendecomposition oracle that validates them.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::matrix::{sym_eigen, Matrix};

const SYM_TOL: f64 = 1e-12;

fn validate_adjacency(op: &'static str, a: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(CoreError::InvalidMatrix {
            op,
            message: alloc::format!("adjacency is {}x{}, expected square", a.rows(), a.cols()),
        });
    }
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            let v = a.get(r, c);
            if v < 0.0 {
                return Err(CoreError::InvalidMatrix {
                    op,
                    message: alloc::format!("negative entry {v} at ({r},{c})"),
                });
            }
            if !v.is_finite() {
                return Err(CoreError::InvalidMatrix {
                    op,
                    message: alloc::format!("non-finite entry at ({r},{c})"),
                });
            }
        }
    }
    if !a.is_symmetric(SYM_TOL) {
        return Err(CoreError::InvalidMatrix {
            op,
            message: String::from("adjacency is not symmetric"),
        });
    }
    Ok(())
}

/// Symmetric degree normalization `D^{-1/2} A D^{-1/2}`.
///
/// A zero-degree node gets `D^{-1/2} = 0`, so its row and column come out
/// zero: an isolated node exchanges no information.
pub fn symmetric_normalize(a: &Matrix) -> Result<Matrix> {
    validate_adjacency("symmetric_normalize", a)?;
    let n = a.rows();
    let mut inv_sqrt_deg = Vec::with_capacity(n);
    for r in 0..n {
        let deg: f64 = a.row(r).iter().sum();
        inv_sqrt_deg.push(if deg > 0.0 { 1.0 / libm::sqrt(deg) } else { 0.0 });
    }
    let mut out = Matrix::zeros(n, n);
    // Fill the upper triangle and mirror so the result is bitwise symmetric.
    for r in 0..n {
        for c in r..n {
            let v = inv_sqrt_deg[r] * a.get(r, c) * inv_sqrt_deg[c];
            out.set(r, c, v);
            out.set(c, r, v);
        }
    }
    Ok(out)
}

/// Normalized graph Laplacian `L = I - D^{-1/2} A D^{-1/2}`.
pub fn laplacian(a: &Matrix) -> Result<Matrix> {
    let normalized = symmetric_normalize(a)?;
    Ok(Matrix::identity(a.rows()).sub(&normalized))
}

/// Adjacency from pairwise Pearson correlation, mapped into [0, 1] by
/// `A[i,j] = (r_ij + 1) / 2`.
///
/// Rows of `series` are sequences; columns are time. A zero-variance
/// sequence is given `r = 0` against everything (edge weight 0.5) and a
/// warning is logged; the diagonal stays 1 (self-correlation).
pub fn pearson_adjacency(series: &Matrix) -> Result<Matrix> {
    let (n, t) = (series.rows(), series.cols());
    if t < 2 {
        return Err(CoreError::InvalidArgument {
            op: "pearson_adjacency",
            message: alloc::format!("need at least 2 time points, got {t}"),
        });
    }
    let mut means = Vec::with_capacity(n);
    let mut norms = Vec::with_capacity(n);
    for i in 0..n {
        let row = series.row(i);
        let mean = row.iter().sum::<f64>() / t as f64;
        let norm: f64 = libm::sqrt(row.iter().map(|v| (v - mean) * (v - mean)).sum());
        if norm == 0.0 {
            log::warn!("pearson_adjacency: sequence {i} has zero variance; using r = 0");
        }
        means.push(mean);
        norms.push(norm);
    }
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        out.set(i, i, 1.0);
        for j in (i + 1)..n {
            let r = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                let mut dot = 0.0;
                for k in 0..t {
                    dot += (series.get(i, k) - means[i]) * (series.get(j, k) - means[j]);
                }
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            let w = 0.5 * (r + 1.0);
            out.set(i, j, w);
            out.set(j, i, w);
        }
    }
    Ok(out)
}

/// One mode's network: the raw adjacency, its normalized form, and whether it
/// is the identity (a mode the data carries no network for).
#[derive(Clone, Debug)]
pub struct ModeNetwork {
    raw: Matrix,
    normalized: Matrix,
    is_identity: bool,
}

impl ModeNetwork {
    /// Validates symmetry/nonnegativity and precomputes the normalization.
    pub fn new(raw: Matrix) -> Result<Self> {
        let normalized = symmetric_normalize(&raw)?;
        let is_identity = raw.is_identity();
        Ok(Self {
            raw,
            normalized,
            is_identity,
        })
    }

    /// The network of a mode with no adjacency information.
    pub fn identity(n: usize) -> Self {
        let id = Matrix::identity(n);
        Self {
            raw: id.clone(),
            normalized: id,
            is_identity: true,
        }
    }

    pub fn raw(&self) -> &Matrix {
        &self.raw
    }

    pub fn normalized(&self) -> &Matrix {
        &self.normalized
    }

    pub fn is_identity(&self) -> bool {
        self.is_identity
    }

    pub fn dim(&self) -> usize {
        self.raw.rows()
    }
}

/// Combines the per-mode normalized adjacencies into one flat-graph
/// adjacency `A_M (x) ... (x) A_1` (right-to-left, matching the
/// first-mode-fastest vectorization).
///
/// Normalizing per mode and then taking the Kronecker product equals
/// normalizing the Kronecker product of the raw matrices, because degrees of
/// a Kronecker product factor into the per-mode degrees.
pub fn flatten_kronecker(nets: &[ModeNetwork]) -> Result<Matrix> {
    if nets.is_empty() {
        return Err(CoreError::InvalidArgument {
            op: "flatten_kronecker",
            message: String::from("need at least one mode network"),
        });
    }
    let mut flat = nets.last().unwrap().normalized().clone();
    for net in nets.iter().rev().skip(1) {
        flat = flat.kronecker(net.normalized());
    }
    Ok(flat)
}

/// Chebyshev matrix polynomial `T_p(l_tilde)` via the recurrence
/// `T_0 = I`, `T_1 = L`, `T_p = 2 L T_{p-1} - T_{p-2}`.
pub fn chebyshev_matrix_poly(l_tilde: &Matrix, p: usize) -> Matrix {
    assert!(l_tilde.is_square(), "chebyshev_matrix_poly: square input");
    let n = l_tilde.rows();
    if p == 0 {
        return Matrix::identity(n);
    }
    let mut prev = Matrix::identity(n);
    let mut cur = l_tilde.clone();
    for _ in 1..p {
        let next = l_tilde.matmul(&cur).scale(2.0).sub(&prev);
        prev = cur;
        cur = next;
    }
    cur
}

/// Scaled operator `2/lambda_max * l - I` fed to the Chebyshev recurrence.
pub fn scaled_laplacian(l: &Matrix, lambda_max: f64) -> Result<Matrix> {
    if lambda_max <= 0.0 {
        return Err(CoreError::InvalidArgument {
            op: "scaled_laplacian",
            message: alloc::format!("lambda_max must be positive, got {lambda_max}"),
        });
    }
    Ok(l.scale(2.0 / lambda_max).sub(&Matrix::identity(l.rows())))
}

/// Eigendecomposition of a graph Laplacian, kept around to cross-check the
/// Chebyshev recurrence through the spectral route.
pub struct SpectralOracle {
    eigvecs: Matrix,
    eigvals: Vec<f64>,
    lambda_max: f64,
}

impl SpectralOracle {
    pub fn new(laplacian: &Matrix) -> Result<Self> {
        let eig = sym_eigen(laplacian)?;
        let lambda_max = eig.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            eigvecs: eig.vectors,
            eigvals: eig.values,
            lambda_max,
        })
    }

    pub fn eigvecs(&self) -> &Matrix {
        &self.eigvecs
    }

    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// `Phi T_p(Lambda_tilde) Phi^T` where the eigenvalues are rescaled by
    /// `2/lambda_max - 1`: the spectral route to the same polynomial the
    /// matrix recurrence computes on the scaled Laplacian.
    pub fn chebyshev_via_spectrum(&self, p: usize) -> Matrix {
        let n = self.eigvals.len();
        let mut diag = Matrix::zeros(n, n);
        for (i, &lam) in self.eigvals.iter().enumerate() {
            let scaled = 2.0 / self.lambda_max * lam - 1.0;
            diag.set(i, i, chebyshev_scalar(scaled, p));
        }
        self.eigvecs.matmul(&diag).matmul(&self.eigvecs.transpose())
    }
}

/// Scalar Chebyshev polynomial by the same recurrence.
pub fn chebyshev_scalar(x: f64, p: usize) -> f64 {
    if p == 0 {
        return 1.0;
    }
    let (mut prev, mut cur) = (1.0, x);
    for _ in 1..p {
        let next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn random_adjacency(n: usize, rng: &mut SeededRng) -> Matrix {
        let mut a = Matrix::zeros(n, n);
        for r in 0..n {
            for c in (r + 1)..n {
                let v = if rng.uniform() < 0.7 { rng.uniform() } else { 0.0 };
                a.set(r, c, v);
                a.set(c, r, v);
            }
        }
        a
    }

    #[test]
    fn normalize_identity_is_identity() {
        let out = symmetric_normalize(&Matrix::identity(4)).unwrap();
        assert!(out.is_identity());
    }

    #[test]
    fn normalize_two_cycle_fixed_point() {
        let a = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let out = symmetric_normalize(&a).unwrap();
        assert_eq!(out.data(), a.data());
        // idempotent here: degrees of the normalized 2-cycle are again 1
        let again = symmetric_normalize(&out).unwrap();
        assert_eq!(again.data(), a.data());
    }

    #[test]
    fn normalize_three_node_path() {
        let a = Matrix::from_rows(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 1.0], &[0.0, 1.0, 0.0]]);
        let out = symmetric_normalize(&a).unwrap();
        let inv_sqrt2 = 1.0 / libm::sqrt(2.0);
        assert!((out.get(0, 1) - inv_sqrt2).abs() < 1e-15);
        assert!((out.get(1, 0) - inv_sqrt2).abs() < 1e-15);
        assert!((out.get(1, 2) - inv_sqrt2).abs() < 1e-15);
        assert_eq!(out.get(0, 2), 0.0);
    }

    #[test]
    fn normalize_zero_degree_row_stays_zero() {
        let a = Matrix::from_rows(&[&[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 1.0, 0.0]]);
        let out = symmetric_normalize(&a).unwrap();
        for c in 0..3 {
            assert_eq!(out.get(0, c), 0.0);
            assert_eq!(out.get(c, 0), 0.0);
        }
    }

    #[test]
    fn normalize_rejects_bad_input() {
        let asym = Matrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(symmetric_normalize(&asym).is_err());
        let neg = Matrix::from_rows(&[&[0.0, -1.0], &[-1.0, 0.0]]);
        assert!(symmetric_normalize(&neg).is_err());
    }

    #[test]
    fn laplacian_cases() {
        assert!(laplacian(&Matrix::identity(3))
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        let a = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let l = laplacian(&a).unwrap();
        assert_eq!(l.data(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn laplacian_path_eigenvalues_in_range() {
        let a = Matrix::from_rows(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 1.0], &[0.0, 1.0, 0.0]]);
        let l = laplacian(&a).unwrap();
        let oracle = SpectralOracle::new(&l).unwrap();
        for &lam in oracle.eigvals() {
            assert!((-1e-10..=2.0 + 1e-10).contains(&lam), "eigenvalue {lam}");
        }
    }

    #[test]
    fn pearson_identical_and_negated() {
        let series = Matrix::from_rows(&[
            &[1.0, 2.0, 3.0, 4.0],
            &[1.0, 2.0, 3.0, 4.0],
            &[-1.0, -2.0, -3.0, -4.0],
        ]);
        let a = pearson_adjacency(&series).unwrap();
        assert!((a.get(0, 1) - 1.0).abs() < 1e-12); // r = 1
        assert!((a.get(0, 2) - 0.0).abs() < 1e-12); // r = -1
        assert_eq!(a.get(0, 0), 1.0);
        assert!(a.is_symmetric(0.0));
    }

    #[test]
    fn pearson_constant_series_gets_half() {
        let series = Matrix::from_rows(&[&[5.0, 5.0, 5.0], &[1.0, 2.0, 3.0]]);
        let a = pearson_adjacency(&series).unwrap();
        assert_eq!(a.get(0, 1), 0.5);
        assert_eq!(a.get(0, 0), 1.0);
    }

    #[test]
    fn pearson_needs_two_points() {
        let series = Matrix::from_rows(&[&[1.0], &[2.0]]);
        assert!(pearson_adjacency(&series).is_err());
    }

    #[test]
    fn mode_network_identity_detection() {
        let net = ModeNetwork::new(Matrix::identity(3)).unwrap();
        assert!(net.is_identity());
        let a = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(!ModeNetwork::new(a).unwrap().is_identity());
        assert!(ModeNetwork::identity(5).is_identity());
    }

    #[test]
    fn flatten_identities() {
        let nets = [ModeNetwork::identity(2), ModeNetwork::identity(3)];
        let flat = flatten_kronecker(&nets).unwrap();
        assert!(flat.is_identity());
        assert_eq!(flat.rows(), 6);
    }

    #[test]
    fn flatten_two_mode_hand_expansion() {
        // nets = [A1 (2x2 exchange), A2 (2x2 exchange)] -> A2 (x) A1.
        let ex = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let nets = [
            ModeNetwork::new(ex.clone()).unwrap(),
            ModeNetwork::new(ex.clone()).unwrap(),
        ];
        let flat = flatten_kronecker(&nets).unwrap();
        let expected = ex.kronecker(&ex);
        assert_eq!(flat.data(), expected.data());
    }

    #[test]
    fn flatten_matches_mode_products_on_random_tensor() {
        use crate::tensor::DenseTensor;
        let mut rng = SeededRng::new(21);
        let a1 = random_adjacency(3, &mut rng);
        let a2 = random_adjacency(2, &mut rng);
        let nets = [
            ModeNetwork::new(a1).unwrap(),
            ModeNetwork::new(a2).unwrap(),
        ];
        let x = DenseTensor::from_fn(&[3, 2], |_| rng.normal());
        let direct = x
            .multi_mode_product(&[(0, nets[0].normalized()), (1, nets[1].normalized())])
            .unwrap();
        let flat = flatten_kronecker(&nets).unwrap();
        let v = flat.matvec(&x.vectorize());
        let via = DenseTensor::from_vectorized(direct.shape(), &v).unwrap();
        assert!(direct.max_abs_diff(&via) < 1e-12);
    }

    #[test]
    fn flatten_symmetric_stays_symmetric() {
        let mut rng = SeededRng::new(22);
        let nets = [
            ModeNetwork::new(random_adjacency(3, &mut rng)).unwrap(),
            ModeNetwork::new(random_adjacency(2, &mut rng)).unwrap(),
        ];
        let flat = flatten_kronecker(&nets).unwrap();
        assert!(flat.is_symmetric(1e-12));
    }

    #[test]
    fn chebyshev_base_cases() {
        let mut rng = SeededRng::new(23);
        let a = random_adjacency(4, &mut rng);
        let l = laplacian(&a).unwrap();
        assert!(chebyshev_matrix_poly(&l, 0).is_identity());
        assert_eq!(chebyshev_matrix_poly(&l, 1).data(), l.data());
    }

    #[test]
    fn chebyshev_matches_spectral_route() {
        // T_p(L_tilde) == Phi T_p(Lambda_tilde) Phi^T for p <= 4, n <= 8.
        let mut rng = SeededRng::new(24);
        for n in 2..=8 {
            let a = random_adjacency(n, &mut rng);
            let l = laplacian(&a).unwrap();
            let oracle = SpectralOracle::new(&l).unwrap();
            if oracle.lambda_max() <= 1e-9 {
                continue; // edgeless draw; the scaled operator is undefined
            }
            let l_tilde = scaled_laplacian(&l, oracle.lambda_max()).unwrap();
            for p in 0..=4 {
                let recurrence = chebyshev_matrix_poly(&l_tilde, p);
                let spectral = oracle.chebyshev_via_spectrum(p);
                assert!(
                    recurrence.max_abs_diff(&spectral) < 1e-8,
                    "n={n} p={p} err={}",
                    recurrence.max_abs_diff(&spectral)
                );
            }
        }
    }

    #[test]
    fn spectral_oracle_reconstructs_laplacian() {
        let mut rng = SeededRng::new(25);
        let a = random_adjacency(5, &mut rng);
        let l = laplacian(&a).unwrap();
        let oracle = SpectralOracle::new(&l).unwrap();
        let n = l.rows();
        let mut lam = Matrix::zeros(n, n);
        for i in 0..n {
            lam.set(i, i, oracle.eigvals()[i]);
        }
        let rec = oracle
            .eigvecs()
            .matmul(&lam)
            .matmul(&oracle.eigvecs().transpose());
        assert!(rec.max_abs_diff(&l) < 1e-8);
        let g = oracle.eigvecs().transpose().matmul(oracle.eigvecs());
        assert!(g.max_abs_diff(&Matrix::identity(n)) < 1e-8);
    }
}
