//! Tensor graph convolution.
//!
//! The layer mixes a tensor's modes through their normalized adjacencies: one
//! term per subset of the networked modes, each subset applying its
//! adjacencies jointly before a feature-space map. Terms that apply several
//! adjacencies at once carry information across modes in a single layer,
//! which a per-mode (independent) layer or a flat-graph layer cannot do.
//!
//! Also here: the independent ablation (`itgcn_forward`), the flat-graph
//! baseline (`gcn_flat_forward`), and the operation-count estimate.

use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::graph::ModeNetwork;
use crate::matrix::Matrix;
use crate::rng::SeededRng;
use crate::tensor::DenseTensor;

/// Activation applied over a layer's summed output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Tanh => libm::tanh(x),
            Activation::Identity => x,
        }
    }

    pub fn apply_tensor(&self, x: &DenseTensor) -> DenseTensor {
        match self {
            Activation::Identity => x.clone(),
            _ => x.map(|v| self.apply(v)),
        }
    }
}

/// Selection of networked modes one convolution term applies: bit `i` says
/// whether the i-th non-identity mode's adjacency participates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndicatorVector {
    bits: Vec<bool>,
}

impl IndicatorVector {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// All 2^k indicators, ordered by their `index()`.
    pub fn enumerate(k: usize) -> Vec<Self> {
        (0..(1usize << k))
            .map(|v| Self {
                bits: (0..k).map(|i| (v >> i) & 1 == 1).collect(),
            })
            .collect()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|b| !b)
    }

    /// Position of this indicator in the canonical enumeration.
    pub fn index(&self) -> usize {
        self.bits
            .iter()
            .enumerate()
            .fold(0usize, |acc, (i, &b)| acc | ((b as usize) << i))
    }
}

/// Parameters of one tensor graph convolution layer: a `d x d'` matrix per
/// indicator (2^K of them, the all-zeros indicator playing the self term).
#[derive(Clone, Debug)]
pub struct TgclParams {
    k: usize,
    d_in: usize,
    d_out: usize,
    thetas: Vec<Matrix>,
    pub activation: Activation,
}

impl TgclParams {
    pub fn new(
        k: usize,
        d_in: usize,
        d_out: usize,
        thetas: Vec<Matrix>,
        activation: Activation,
    ) -> Result<Self> {
        if thetas.len() != (1usize << k) {
            return Err(CoreError::InvalidArgument {
                op: "TgclParams::new",
                message: alloc::format!(
                    "expected {} parameter matrices for K={k}, got {}",
                    1usize << k,
                    thetas.len()
                ),
            });
        }
        for (i, th) in thetas.iter().enumerate() {
            if th.rows() != d_in || th.cols() != d_out {
                return Err(CoreError::ShapeMismatch {
                    op: "TgclParams::new",
                    expected: alloc::format!("{d_in}x{d_out}"),
                    got: alloc::format!("{}x{} (theta {i})", th.rows(), th.cols()),
                    mode: None,
                });
            }
        }
        Ok(Self {
            k,
            d_in,
            d_out,
            thetas,
            activation,
        })
    }

    /// Variance-preserving uniform init in +-sqrt(6/(d+d')).
    pub fn init(
        k: usize,
        d_in: usize,
        d_out: usize,
        activation: Activation,
        rng: &mut SeededRng,
    ) -> Self {
        let bound = libm::sqrt(6.0 / (d_in + d_out) as f64);
        let thetas = (0..(1usize << k))
            .map(|_| Matrix::from_fn(d_in, d_out, |_, _| rng.uniform_in(-bound, bound)))
            .collect();
        Self {
            k,
            d_in,
            d_out,
            thetas,
            activation,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn theta(&self, p: &IndicatorVector) -> &Matrix {
        &self.thetas[p.index()]
    }

    pub fn theta_by_index(&self, i: usize) -> &Matrix {
        &self.thetas[i]
    }

    pub fn thetas(&self) -> &[Matrix] {
        &self.thetas
    }

    pub fn thetas_mut(&mut self) -> &mut [Matrix] {
        &mut self.thetas
    }

    pub fn param_count(&self) -> u64 {
        (1u64 << self.k) * (self.d_in as u64) * (self.d_out as u64)
    }
}

/// Indices of the non-identity modes, in mode order. These are the K modes
/// the indicator expansion ranges over; identity modes are excluded because
/// applying an identity adjacency is a no-op and would only duplicate terms.
pub fn networked_modes(nets: &[ModeNetwork]) -> Vec<usize> {
    nets.iter()
        .enumerate()
        .filter(|(_, n)| !n.is_identity())
        .map(|(m, _)| m)
        .collect()
}

fn check_input(
    op: &'static str,
    x: &DenseTensor,
    nets: &[ModeNetwork],
    d_in: usize,
) -> Result<()> {
    if x.order() != nets.len() + 1 {
        return Err(CoreError::ShapeMismatch {
            op,
            expected: alloc::format!("order {} (modes + feature mode)", nets.len() + 1),
            got: alloc::format!("order {}", x.order()),
            mode: None,
        });
    }
    for (m, net) in nets.iter().enumerate() {
        if x.shape()[m] != net.dim() {
            return Err(CoreError::ShapeMismatch {
                op,
                expected: alloc::format!("{}", net.dim()),
                got: alloc::format!("{}", x.shape()[m]),
                mode: Some(m),
            });
        }
    }
    let d = *x.shape().last().unwrap();
    if d != d_in {
        return Err(CoreError::ShapeMismatch {
            op,
            expected: alloc::format!("{d_in} channels"),
            got: alloc::format!("{d}"),
            mode: Some(x.order() - 1),
        });
    }
    Ok(())
}

/// Tensor graph convolution layer forward pass.
///
/// `x` has shape `N_1 x ... x N_M x d`; the output replaces the channel mode
/// by `d'`. Pre-activation it computes, over all indicators `p` on the
/// non-identity modes,
/// `sum_p  x (prod_{p_m = 1} x_m A~_m) x_{M+1} Theta_p`,
/// with the all-zeros indicator contributing the self term `x x_{M+1} Theta_0`.
pub fn tgcl_forward(
    x: &DenseTensor,
    nets: &[ModeNetwork],
    params: &TgclParams,
) -> Result<DenseTensor> {
    check_input("tgcl_forward", x, nets, params.d_in())?;
    let active = networked_modes(nets);
    if active.len() != params.k() {
        return Err(CoreError::InvalidArgument {
            op: "tgcl_forward",
            message: alloc::format!(
                "params built for K={} networked modes, data has {}",
                params.k(),
                active.len()
            ),
        });
    }
    let feature_mode = x.order() - 1;
    let mut out: Option<DenseTensor> = None;
    for p in IndicatorVector::enumerate(params.k()) {
        let mut term = x.clone();
        for (bit, &mode) in p.bits().iter().zip(active.iter()) {
            if *bit {
                term = term.mode_product(nets[mode].normalized(), mode)?;
            }
        }
        term = term.mode_product(params.theta(&p), feature_mode)?;
        out = Some(match out {
            None => term,
            Some(acc) => acc.add(&term),
        });
    }
    Ok(params.activation.apply_tensor(&out.expect("at least one term")))
}

/// Parameters for the independent (synergy-free) ablation: one matrix per
/// mode plus the self term, all `d x d'`.
#[derive(Clone, Debug)]
pub struct ItgcnParams {
    d_in: usize,
    d_out: usize,
    /// `thetas[0]` is the self term; `thetas[m]` pairs with mode `m - 1`.
    thetas: Vec<Matrix>,
    pub activation: Activation,
}

impl ItgcnParams {
    pub fn new(
        modes: usize,
        d_in: usize,
        d_out: usize,
        thetas: Vec<Matrix>,
        activation: Activation,
    ) -> Result<Self> {
        if thetas.len() != modes + 1 {
            return Err(CoreError::InvalidArgument {
                op: "ItgcnParams::new",
                message: alloc::format!(
                    "expected {} matrices (one per mode plus the self term), got {}",
                    modes + 1,
                    thetas.len()
                ),
            });
        }
        for th in &thetas {
            if th.rows() != d_in || th.cols() != d_out {
                return Err(CoreError::ShapeMismatch {
                    op: "ItgcnParams::new",
                    expected: alloc::format!("{d_in}x{d_out}"),
                    got: alloc::format!("{}x{}", th.rows(), th.cols()),
                    mode: None,
                });
            }
        }
        Ok(Self {
            d_in,
            d_out,
            thetas,
            activation,
        })
    }

    pub fn init(
        modes: usize,
        d_in: usize,
        d_out: usize,
        activation: Activation,
        rng: &mut SeededRng,
    ) -> Self {
        let bound = libm::sqrt(6.0 / (d_in + d_out) as f64);
        let thetas = (0..=modes)
            .map(|_| Matrix::from_fn(d_in, d_out, |_, _| rng.uniform_in(-bound, bound)))
            .collect();
        Self {
            d_in,
            d_out,
            thetas,
            activation,
        }
    }

    pub fn theta_zero(&self) -> &Matrix {
        &self.thetas[0]
    }

    pub fn theta_mode(&self, mode: usize) -> &Matrix {
        &self.thetas[mode + 1]
    }

    pub fn thetas(&self) -> &[Matrix] {
        &self.thetas
    }

    pub fn thetas_mut(&mut self) -> &mut [Matrix] {
        &mut self.thetas
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }
}

/// Independent-mode ablation: `sigma(sum_m x x_m A~_m x_{M+1} Theta_m +
/// x x_{M+1} Theta_0)`. Every mode contributes a term, identity modes
/// included (their adjacency application is a no-op).
pub fn itgcn_forward(
    x: &DenseTensor,
    nets: &[ModeNetwork],
    params: &ItgcnParams,
) -> Result<DenseTensor> {
    check_input("itgcn_forward", x, nets, params.d_in())?;
    if params.thetas.len() != nets.len() + 1 {
        return Err(CoreError::InvalidArgument {
            op: "itgcn_forward",
            message: alloc::format!(
                "params hold {} matrices, need {} for {} modes",
                params.thetas.len(),
                nets.len() + 1,
                nets.len()
            ),
        });
    }
    let feature_mode = x.order() - 1;
    let mut out = x.mode_product(params.theta_zero(), feature_mode)?;
    for (m, net) in nets.iter().enumerate() {
        let term = x
            .mode_product(net.normalized(), m)?
            .mode_product(params.theta_mode(m), feature_mode)?;
        out = out.add(&term);
    }
    Ok(params.activation.apply_tensor(&out))
}

/// Single-graph convolution on the flattened node set:
/// `sigma(A~ X Theta_1 + X Theta_0)` on the `(prod N_m) x d` matrix view.
///
/// Implemented through the same mode-product kernel as the tensor layer so
/// that the M=1 reduction is bit-for-bit.
pub fn gcn_flat_forward(
    x_mat: &Matrix,
    a_flat: &Matrix,
    theta0: &Matrix,
    theta1: &Matrix,
    activation: Activation,
) -> Result<Matrix> {
    if a_flat.rows() != x_mat.rows() || !a_flat.is_square() {
        return Err(CoreError::ShapeMismatch {
            op: "gcn_flat_forward",
            expected: alloc::format!("{0}x{0} adjacency", x_mat.rows()),
            got: alloc::format!("{}x{}", a_flat.rows(), a_flat.cols()),
            mode: None,
        });
    }
    if theta0.rows() != x_mat.cols() || theta1.rows() != x_mat.cols() {
        return Err(CoreError::ShapeMismatch {
            op: "gcn_flat_forward",
            expected: alloc::format!("{} rows in theta", x_mat.cols()),
            got: alloc::format!("{}x{}", theta1.rows(), theta1.cols()),
            mode: None,
        });
    }
    let x = DenseTensor::from_matrix(x_mat);
    // A~ X == X x_1 A~^T; the adjacency is symmetric in every caller, but the
    // transpose keeps the formula exact for any input.
    let prop = x
        .mode_product(&a_flat.transpose(), 0)?
        .mode_product(theta1, 1)?;
    let own = x.mode_product(theta0, 1)?;
    let summed = prop.add(&own);
    activation.apply_tensor(&summed).to_matrix()
}

/// Operation-count estimate of one tensor graph convolution:
/// `2^(K-1) * prod(dims) * (2 + sum of the first K dims)`.
pub fn tgcl_flops(dims: &[usize], k: usize) -> u64 {
    assert!(k >= 1 && k <= dims.len(), "tgcl_flops: 1 <= K <= M");
    let prod: u64 = dims.iter().map(|&d| d as u64).product();
    let sum_k: u64 = dims[..k].iter().map(|&d| d as u64).sum();
    (1u64 << (k - 1)) * prod * (2 + sum_k)
}
