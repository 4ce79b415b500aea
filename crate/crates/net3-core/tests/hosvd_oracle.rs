//! Truncated HOSVD against an independent per-mode SVD oracle.
//!
//! The oracle computes each mode's leading singular subspace by power
//! iteration with deflation (no shared code with the library's Jacobi
//! route) and projects the tensor onto it; the reconstruction errors of
//! the two routes must agree.

use net3_core::matrix::Matrix;
use net3_core::rng::SeededRng;
use net3_core::tensor::DenseTensor;

/// Top-`rank` eigenvectors of the symmetric PSD `gram` via power iteration
/// with Hotelling deflation.
#[allow(clippy::needless_range_loop)]
fn leading_eigvecs_power(gram: &Matrix, rank: usize, rng: &mut SeededRng) -> Matrix {
    let n = gram.rows();
    let mut deflated = gram.clone();
    let mut vectors = Matrix::zeros(n, rank);
    for r in 0..rank {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mut lambda = 0.0;
        for _ in 0..10_000 {
            let w = deflated.matvec(&v);
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-300 {
                break;
            }
            let next: Vec<f64> = w.iter().map(|x| x / norm).collect();
            let delta: f64 = next
                .iter()
                .zip(v.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            v = next;
            lambda = norm;
            if delta < 1e-14 {
                break;
            }
        }
        for i in 0..n {
            vectors.set(i, r, v[i]);
        }
        // deflate: gram <- gram - lambda v v^T
        for i in 0..n {
            for j in 0..n {
                deflated.set(i, j, deflated.get(i, j) - lambda * v[i] * v[j]);
            }
        }
    }
    vectors
}

#[test]
fn truncated_reconstruction_error_matches_power_iteration_oracle() {
    let mut rng = SeededRng::new(4444);
    let x = DenseTensor::from_fn(&[4, 4, 4], |_| rng.normal());
    let ranks = [2usize, 2, 2];

    let tucker = x.hosvd(&ranks).unwrap();
    let lib_error = tucker.reconstruct().unwrap().sub(&x).frobenius_norm();

    // oracle: project every mode onto its leading singular subspace
    let mut projected = x.clone();
    for (mode, &rank) in ranks.iter().enumerate() {
        let unf = x.unfold(mode);
        let gram = unf.matmul(&unf.transpose());
        let u = leading_eigvecs_power(&gram, rank, &mut rng); // n x rank
        let projector = u.matmul(&u.transpose()); // n x n, symmetric
        projected = projected.mode_product(&projector, mode).unwrap();
    }
    let oracle_error = projected.sub(&x).frobenius_norm();

    assert!(
        (lib_error - oracle_error).abs() < 1e-8,
        "library {lib_error} vs oracle {oracle_error}"
    );
    // the truncation genuinely loses something on a random tensor
    assert!(lib_error > 1e-3);
}

#[test]
fn oracle_agrees_on_several_shapes_and_ranks() {
    let mut rng = SeededRng::new(5555);
    for (shape, ranks) in [
        (vec![5, 3, 2], vec![2usize, 2, 1]),
        (vec![4, 6], vec![3, 2]),
        (vec![3, 3, 3], vec![1, 2, 3]),
    ] {
        let x = DenseTensor::from_fn(&shape, |_| rng.normal());
        let tucker = x.hosvd(&ranks).unwrap();
        let lib_error = tucker.reconstruct().unwrap().sub(&x).frobenius_norm();
        let mut projected = x.clone();
        for (mode, &rank) in ranks.iter().enumerate() {
            let unf = x.unfold(mode);
            let gram = unf.matmul(&unf.transpose());
            let u = leading_eigvecs_power(&gram, rank, &mut rng);
            let projector = u.matmul(&u.transpose());
            projected = projected.mode_product(&projector, mode).unwrap();
        }
        let oracle_error = projected.sub(&x).frobenius_norm();
        assert!(
            (lib_error - oracle_error).abs() < 1e-8,
            "shape {shape:?} ranks {ranks:?}: {lib_error} vs {oracle_error}"
        );
    }
}
