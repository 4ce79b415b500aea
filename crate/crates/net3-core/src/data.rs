//! In-memory datasets: a tensor time series with its per-mode networks and
//! observation mask, per-series normalization, recovery/future splits, and a
//! synthetic low-rank teacher for self-contained end-to-end tests.
//!
//! File formats (manifest, payload, adjacency CSV) live in the companion CLI
//! crate; this module only defines the validated in-memory object.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::graph::{pearson_adjacency, ModeNetwork};
use crate::matrix::Matrix;
use crate::rng::SeededRng;
use crate::tensor::DenseTensor;
use crate::trnn::FactorSet;

/// A tensor time series with networks: values shaped `N_1 x ... x N_M x T`
/// (time last), one network per non-time mode (identity when the mode has no
/// adjacency information), and a boolean mask marking observed entries.
#[derive(Clone, Debug)]
pub struct NetTensorTimeSeries {
    values: DenseTensor,
    networks: Vec<ModeNetwork>,
    mask: Vec<bool>,
}

impl NetTensorTimeSeries {
    pub fn new(
        values: DenseTensor,
        networks: Vec<ModeNetwork>,
        mask: Option<Vec<bool>>,
    ) -> Result<Self> {
        if values.order() < 2 {
            return Err(CoreError::DataInconsistency {
                message: String::from("values need at least one data mode plus the time mode"),
            });
        }
        let m = values.order() - 1;
        if networks.len() != m {
            return Err(CoreError::DataInconsistency {
                message: alloc::format!(
                    "{} networks supplied for {m} non-time modes",
                    networks.len()
                ),
            });
        }
        for (i, net) in networks.iter().enumerate() {
            if net.dim() != values.shape()[i] {
                return Err(CoreError::DataInconsistency {
                    message: alloc::format!(
                        "network {i} is {}x{0} but mode {i} has dimension {}",
                        net.dim(),
                        values.shape()[i]
                    ),
                });
            }
        }
        let mask = mask.unwrap_or_else(|| vec![true; values.len()]);
        if mask.len() != values.len() {
            return Err(CoreError::DataInconsistency {
                message: alloc::format!(
                    "mask has {} entries, values have {}",
                    mask.len(),
                    values.len()
                ),
            });
        }
        for (i, (&v, &obs)) in values.data().iter().zip(mask.iter()).enumerate() {
            if !v.is_finite() {
                let _ = obs;
                return Err(CoreError::DataInconsistency {
                    message: alloc::format!("non-finite value at flat index {i}"),
                });
            }
        }
        Ok(Self {
            values,
            networks,
            mask,
        })
    }

    pub fn values(&self) -> &DenseTensor {
        &self.values
    }

    pub fn networks(&self) -> &[ModeNetwork] {
        &self.networks
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Non-time mode dimensions.
    pub fn dims(&self) -> &[usize] {
        let s = self.values.shape();
        &s[..s.len() - 1]
    }

    pub fn t_len(&self) -> usize {
        *self.values.shape().last().unwrap()
    }

    /// Number of series (flattened non-time index tuples).
    pub fn series_count(&self) -> usize {
        self.dims().iter().product()
    }

    /// The snapshot at time `t`, shape `N_1 x ... x N_M`.
    pub fn snapshot(&self, t: usize) -> Result<DenseTensor> {
        self.values.index_last(t)
    }

    /// Flat mask index for (series, t); series enumerates the non-time modes
    /// row-major, which matches the values layout with time last.
    #[inline]
    pub fn flat_index(&self, series: usize, t: usize) -> usize {
        series * self.t_len() + t
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Copy of the values with unobserved entries forced to zero (the
    /// convention for feeding gappy history to the model in normalized
    /// space, where zero is the per-series mean).
    pub fn zero_filled_values(&self) -> DenseTensor {
        let mut out = self.values.clone();
        for (v, &obs) in out.data_mut().iter_mut().zip(self.mask.iter()) {
            if !obs {
                *v = 0.0;
            }
        }
        out
    }

    pub fn with_values(&self, values: DenseTensor) -> Result<Self> {
        Self::new(values, self.networks.clone(), Some(self.mask.clone()))
    }

    pub fn with_mask(&self, mask: Vec<bool>) -> Result<Self> {
        Self::new(self.values.clone(), self.networks.clone(), Some(mask))
    }
}

/// Per-series mean and standard deviation over the observed training region.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Series whose training region was constant (or empty); their std is
    /// pinned to 1 so normalization maps them to zero.
    pub constant: Vec<bool>,
}

impl NormStats {
    /// Statistics over `t < train_end`, observed entries only.
    pub fn compute(ds: &NetTensorTimeSeries, train_end: usize) -> Result<Self> {
        let t_len = ds.t_len();
        if train_end == 0 || train_end > t_len {
            return Err(CoreError::InvalidArgument {
                op: "NormStats::compute",
                message: alloc::format!(
                    "training region must cover 1..={t_len} steps, got {train_end}"
                ),
            });
        }
        let series = ds.series_count();
        let mut mean = vec![0.0; series];
        let mut std = vec![1.0; series];
        let mut constant = vec![false; series];
        for s in 0..series {
            let mut sum = 0.0;
            let mut count = 0usize;
            for t in 0..train_end {
                let k = ds.flat_index(s, t);
                if ds.mask()[k] {
                    sum += ds.values().data()[k];
                    count += 1;
                }
            }
            if count == 0 {
                log::warn!("series {s}: no observed training entries; using mean 0, std 1");
                constant[s] = true;
                continue;
            }
            let mu = sum / count as f64;
            let mut sq = 0.0;
            for t in 0..train_end {
                let k = ds.flat_index(s, t);
                if ds.mask()[k] {
                    let d = ds.values().data()[k] - mu;
                    sq += d * d;
                }
            }
            let sigma = libm::sqrt(sq / count as f64);
            mean[s] = mu;
            if sigma > 0.0 {
                std[s] = sigma;
            } else {
                constant[s] = true;
            }
        }
        Ok(Self {
            mean,
            std,
            constant,
        })
    }

    pub fn series_count(&self) -> usize {
        self.mean.len()
    }
}

/// Z-scores every series with the given statistics. Applies to all time
/// steps (the statistics themselves must come from the training region).
pub fn normalize(ds: &NetTensorTimeSeries, stats: &NormStats) -> Result<NetTensorTimeSeries> {
    apply_affine(ds, stats, |v, mu, sigma| (v - mu) / sigma)
}

/// Inverse of [`normalize`].
pub fn denormalize(ds: &NetTensorTimeSeries, stats: &NormStats) -> Result<NetTensorTimeSeries> {
    apply_affine(ds, stats, |v, mu, sigma| v * sigma + mu)
}

fn apply_affine(
    ds: &NetTensorTimeSeries,
    stats: &NormStats,
    f: impl Fn(f64, f64, f64) -> f64,
) -> Result<NetTensorTimeSeries> {
    if stats.series_count() != ds.series_count() {
        return Err(CoreError::DataInconsistency {
            message: alloc::format!(
                "stats cover {} series, dataset has {}",
                stats.series_count(),
                ds.series_count()
            ),
        });
    }
    let t_len = ds.t_len();
    let mut values = ds.values().clone();
    for (k, v) in values.data_mut().iter_mut().enumerate() {
        let s = k / t_len;
        *v = f(*v, stats.mean[s], stats.std[s]);
    }
    ds.with_values(values)
}

/// Denormalizes a single predicted value for series `s`.
pub fn denormalize_value(stats: &NormStats, series: usize, v: f64) -> f64 {
    v * stats.std[series] + stats.mean[series]
}

/// Future split: the boundary index such that `t >= boundary` is the test
/// region; `boundary = T - round(fraction * T)`.
pub fn split_future(ds: &NetTensorTimeSeries, fraction: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&fraction) || fraction <= 0.0 {
        return Err(CoreError::InvalidArgument {
            op: "split_future",
            message: alloc::format!("fraction must be in (0,1), got {fraction}"),
        });
    }
    let t_len = ds.t_len();
    let test_len = libm::round(fraction * t_len as f64) as usize;
    if test_len == 0 || test_len >= t_len {
        return Err(CoreError::InvalidArgument {
            op: "split_future",
            message: alloc::format!(
                "fraction {fraction} leaves a degenerate split (T = {t_len})"
            ),
        });
    }
    Ok(t_len - test_len)
}

/// Recovery split: marks `round(fraction * observed_count)` observed entries
/// as held out, drawn uniformly and reproducibly from the entries with
/// `t >= min_t` (so each held-out entry has enough history to recover from).
///
/// Returns the held-out mask (`true` = test entry). Warns when some series
/// loses every observed entry.
pub fn split_recovery(
    ds: &NetTensorTimeSeries,
    fraction: f64,
    seed: u64,
    min_t: usize,
) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&fraction) || fraction <= 0.0 {
        return Err(CoreError::InvalidArgument {
            op: "split_recovery",
            message: alloc::format!("fraction must be in (0,1), got {fraction}"),
        });
    }
    let t_len = ds.t_len();
    let eligible: Vec<usize> = (0..ds.values().len())
        .filter(|&k| ds.mask()[k] && (k % t_len) >= min_t)
        .collect();
    let total_observed = ds.observed_count();
    let count = libm::round(fraction * total_observed as f64) as usize;
    if count == 0 {
        return Err(CoreError::EmptySelection {
            op: "split_recovery",
        });
    }
    if count > eligible.len() {
        return Err(CoreError::InvalidArgument {
            op: "split_recovery",
            message: alloc::format!(
                "need {count} held-out entries but only {} are eligible (t >= {min_t})",
                eligible.len()
            ),
        });
    }
    let mut rng = SeededRng::new(seed);
    let picks = rng.sample_indices(eligible.len(), count);
    let mut held_out = vec![false; ds.values().len()];
    for p in picks {
        held_out[eligible[p]] = true;
    }
    // Warn about series left with no observed training entries.
    let series = ds.series_count();
    for s in 0..series {
        let any_left = (0..t_len).any(|t| {
            let k = ds.flat_index(s, t);
            ds.mask()[k] && !held_out[k]
        });
        if !any_left {
            log::warn!("split_recovery: series {s} is entirely held out");
        }
    }
    Ok(held_out)
}

/// Configuration of the synthetic low-rank teacher.
#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub dims: Vec<usize>,
    pub core_dims: Vec<usize>,
    pub t_len: usize,
    pub noise: f64,
    /// Spectral radius of the latent transition; must be below 1.
    pub spectral_radius: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dims: vec![6, 4],
            core_dims: vec![3, 2],
            t_len: 400,
            noise: 0.05,
            spectral_radius: 0.999,
            seed: 7,
        }
    }
}

/// Generates a dataset whose snapshots live (up to noise) in a fixed factor
/// span: a latent core state evolves by a stable rotation-like linear map,
/// each snapshot is the expanded core plus Gaussian noise, and the per-mode
/// networks are Pearson adjacencies of the emitted series.
pub fn synthesize(cfg: &SynthConfig) -> Result<NetTensorTimeSeries> {
    if cfg.dims.is_empty() || cfg.dims.len() != cfg.core_dims.len() {
        return Err(CoreError::InvalidArgument {
            op: "synthesize",
            message: String::from("dims and core_dims must be nonempty and equally long"),
        });
    }
    for (m, (&n, &np)) in cfg.dims.iter().zip(cfg.core_dims.iter()).enumerate() {
        if np == 0 || np > n {
            return Err(CoreError::InvalidArgument {
                op: "synthesize",
                message: alloc::format!("core dim {np} invalid for mode {m} of size {n}"),
            });
        }
    }
    if cfg.t_len < 2 {
        return Err(CoreError::InvalidArgument {
            op: "synthesize",
            message: alloc::format!("need at least 2 time steps, got {}", cfg.t_len),
        });
    }
    if !(cfg.spectral_radius > 0.0 && cfg.spectral_radius < 1.0) {
        return Err(CoreError::InvalidArgument {
            op: "synthesize",
            message: alloc::format!(
                "transition with spectral radius {} rejected (must be in (0,1))",
                cfg.spectral_radius
            ),
        });
    }
    if cfg.noise < 0.0 {
        return Err(CoreError::InvalidArgument {
            op: "synthesize",
            message: alloc::format!("noise level must be nonnegative, got {}", cfg.noise),
        });
    }

    let mut rng = SeededRng::new(cfg.seed);
    let factors = FactorSet::init(&cfg.dims, &cfg.core_dims, &mut rng)?;
    let latent_dim: usize = cfg.core_dims.iter().product();

    // Stable transition: orthogonal similarity of a block-rotation matrix,
    // scaled by the spectral radius. Orthogonality keeps trajectories from
    // collapsing; the small angles keep consecutive steps close enough for
    // short histories to be informative.
    let mut rot = Matrix::identity(latent_dim);
    let mut i = 0;
    while i + 1 < latent_dim {
        let theta = rng.uniform_in(0.08, 0.3);
        let (c, s) = (libm::cos(theta), libm::sin(theta));
        rot.set(i, i, c);
        rot.set(i, i + 1, -s);
        rot.set(i + 1, i, s);
        rot.set(i + 1, i + 1, c);
        i += 2;
    }
    let basis = crate::trnn::orthonormal_rows(latent_dim, latent_dim, &mut rng)?;
    let transition = basis
        .transpose()
        .matmul(&rot)
        .matmul(&basis)
        .scale(cfg.spectral_radius);

    let mut latent: Vec<f64> = (0..latent_dim).map(|_| rng.normal()).collect();
    let series_count: usize = cfg.dims.iter().product();
    let mut shape = cfg.dims.clone();
    shape.push(cfg.t_len);
    let mut values = DenseTensor::zeros(&shape);
    for t in 0..cfg.t_len {
        let core = DenseTensor::new(cfg.core_dims.clone(), latent.clone())?;
        let mode_factors: Vec<(usize, &Matrix)> =
            factors.factors().iter().enumerate().collect();
        let snapshot = core.multi_mode_product(&mode_factors)?;
        for s in 0..series_count {
            let noise = if cfg.noise > 0.0 {
                cfg.noise * rng.normal()
            } else {
                0.0
            };
            values.data_mut()[s * cfg.t_len + t] = snapshot.data()[s] + noise;
        }
        latent = transition.matvec(&latent);
    }

    // Per-mode Pearson networks from the emitted data: sequences are the
    // mode's slices flattened over the other modes and time.
    let mut networks = Vec::with_capacity(cfg.dims.len());
    for (m, &n_m) in cfg.dims.iter().enumerate() {
        let cols = values.len() / n_m;
        let mut seqs = Matrix::zeros(n_m, cols);
        let mut col_counters = vec![0usize; n_m];
        let mut idx = vec![0usize; shape.len()];
        for &v in values.data() {
            let row = idx[m];
            seqs.set(row, col_counters[row], v);
            col_counters[row] += 1;
            // advance row-major index
            for d in (0..shape.len()).rev() {
                idx[d] += 1;
                if idx[d] < shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        networks.push(ModeNetwork::new(pearson_adjacency(&seqs)?)?);
    }

    NetTensorTimeSeries::new(values, networks, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset() -> NetTensorTimeSeries {
        // 2x2 series over 5 steps, values = 10*s + t.
        let mut values = DenseTensor::zeros(&[2, 2, 5]);
        for s in 0..4 {
            for t in 0..5 {
                values.data_mut()[s * 5 + t] = (10 * s + t) as f64;
            }
        }
        let nets = vec![ModeNetwork::identity(2), ModeNetwork::identity(2)];
        NetTensorTimeSeries::new(values, nets, None).unwrap()
    }

    #[test]
    fn constructor_validates_pairing() {
        let values = DenseTensor::zeros(&[2, 3, 4]);
        let nets = vec![ModeNetwork::identity(2), ModeNetwork::identity(3)];
        assert!(NetTensorTimeSeries::new(values.clone(), nets.clone(), None).is_ok());
        let wrong_net = vec![ModeNetwork::identity(2), ModeNetwork::identity(5)];
        assert!(NetTensorTimeSeries::new(values.clone(), wrong_net, None).is_err());
        let wrong_mask = Some(vec![true; 3]);
        assert!(NetTensorTimeSeries::new(values.clone(), nets.clone(), wrong_mask).is_err());
        let mut with_nan = values.clone();
        with_nan.data_mut()[0] = f64::NAN;
        assert!(NetTensorTimeSeries::new(with_nan, nets, None).is_err());
    }

    #[test]
    fn stats_and_normalize_round_trip() {
        let ds = toy_dataset();
        let stats = NormStats::compute(&ds, 5).unwrap();
        let normed = normalize(&ds, &stats).unwrap();
        // per-series mean ~ 0 over the training region
        for s in 0..4 {
            let mean: f64 =
                (0..5).map(|t| normed.values().data()[s * 5 + t]).sum::<f64>() / 5.0;
            assert!(mean.abs() < 1e-10);
        }
        let back = denormalize(&normed, &stats).unwrap();
        assert!(back.values().max_abs_diff(ds.values()) < 1e-12);
    }

    #[test]
    fn constant_series_normalizes_to_zero() {
        let mut values = DenseTensor::zeros(&[1, 3]);
        values.data_mut().copy_from_slice(&[7.0, 7.0, 7.0]);
        let ds =
            NetTensorTimeSeries::new(values, vec![ModeNetwork::identity(1)], None).unwrap();
        let stats = NormStats::compute(&ds, 3).unwrap();
        assert!(stats.constant[0]);
        assert_eq!(stats.std[0], 1.0);
        let normed = normalize(&ds, &stats).unwrap();
        assert!(normed.values().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn future_split_boundary() {
        // fraction 0.1 of T=1440 -> boundary 1296
        let values = DenseTensor::zeros(&[1, 1440]);
        let ds =
            NetTensorTimeSeries::new(values, vec![ModeNetwork::identity(1)], None).unwrap();
        assert_eq!(split_future(&ds, 0.1).unwrap(), 1296);
        assert!(split_future(&ds, 0.0).is_err());
        assert!(split_future(&ds, 1.0).is_err());
    }

    #[test]
    fn recovery_split_exact_count_and_determinism() {
        let values = DenseTensor::zeros(&[4, 25]); // 100 entries
        let ds =
            NetTensorTimeSeries::new(values, vec![ModeNetwork::identity(4)], None).unwrap();
        let held = split_recovery(&ds, 0.5, 99, 0).unwrap();
        assert_eq!(held.iter().filter(|&&b| b).count(), 50);
        let held2 = split_recovery(&ds, 0.5, 99, 0).unwrap();
        assert_eq!(held, held2);
        let held3 = split_recovery(&ds, 0.5, 100, 0).unwrap();
        assert_ne!(held, held3);
    }

    #[test]
    fn recovery_split_respects_min_t() {
        let values = DenseTensor::zeros(&[2, 10]);
        let ds =
            NetTensorTimeSeries::new(values, vec![ModeNetwork::identity(2)], None).unwrap();
        let held = split_recovery(&ds, 0.2, 1, 5).unwrap();
        for (k, &h) in held.iter().enumerate() {
            if h {
                assert!(k % 10 >= 5);
            }
        }
    }

    #[test]
    fn synthesize_deterministic_and_bounded() {
        let cfg = SynthConfig {
            dims: vec![4, 3],
            core_dims: vec![2, 2],
            t_len: 500,
            noise: 0.05,
            spectral_radius: 0.9,
            seed: 5,
        };
        let a = synthesize(&cfg).unwrap();
        let b = synthesize(&cfg).unwrap();
        assert_eq!(a.values().data(), b.values().data());
        let max = a.values().data().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(max.is_finite() && max < 1e3, "max |value| = {max}");
    }

    #[test]
    fn synthesize_noise_free_is_low_rank() {
        let cfg = SynthConfig {
            dims: vec![5, 4],
            core_dims: vec![2, 2],
            t_len: 30,
            noise: 0.0,
            spectral_radius: 0.95,
            seed: 11,
        };
        let ds = synthesize(&cfg).unwrap();
        for t in [0usize, 7, 29] {
            let snap = ds.snapshot(t).unwrap();
            if snap.frobenius_norm() < 1e-9 {
                continue;
            }
            let tucker = snap.hosvd(&[2, 2]).unwrap();
            let rec = tucker.reconstruct().unwrap();
            assert!(
                rec.max_abs_diff(&snap) < 1e-8,
                "snapshot {t} not in the factor span"
            );
        }
    }

    #[test]
    fn synthesize_rejects_unstable_map() {
        let cfg = SynthConfig {
            spectral_radius: 1.0,
            ..SynthConfig::default()
        };
        assert!(synthesize(&cfg).is_err());
    }

    #[test]
    fn zero_fill_masks_out_unobserved() {
        let ds = toy_dataset();
        let mut mask = vec![true; 20];
        mask[3] = false;
        let gappy = ds.with_mask(mask).unwrap();
        let filled = gappy.zero_filled_values();
        assert_eq!(filled.data()[3], 0.0);
        assert_eq!(filled.data()[4], ds.values().data()[4]);
    }
}
