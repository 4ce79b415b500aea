//! Training: windowing, the taped objective, Adam, metrics, and the fit loop.
//!
//! Everything is seeded and sequential, so a run is bit-reproducible from
//! `(dataset, config, seed)`.

pub mod adam;
mod pipeline;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use pipeline::{build_window_loss, TapedWindow};
pub use tape::{NodeId, ParamStore, Tape};

use alloc::vec::Vec;

use crate::data::NetTensorTimeSeries;
use crate::error::{CoreError, Result};
use crate::model::{forward, ModelVariant, Net3Config, Net3Params};
use crate::rng::SeededRng;
use crate::tensor::DenseTensor;
use crate::tgcn::Activation;
use crate::trnn::CellOutput;

/// Hyperparameters of one training run. Defaults: window 5 history steps and
/// 1 future step, hidden sizes 8, learning rate 0.01, penalty coefficients
/// 1e-3, interaction degree 0.8.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    /// History steps per window.
    pub omega: usize,
    /// Future steps per window (training supports 1; longer horizons roll
    /// out iteratively at prediction time).
    pub tau: usize,
    /// Interaction degree for the Tucker core.
    pub rho: f64,
    /// Embedding channels.
    pub d: usize,
    /// Hidden channels.
    pub d_out: usize,
    pub lr: f64,
    /// Weight of the core-reconstruction penalty.
    pub mu1: f64,
    /// Weight of the factor-orthonormality penalty.
    pub mu2: f64,
    pub epochs: usize,
    pub seed: u64,
    pub variant: ModelVariant,
    pub activation: Activation,
    pub cell_output: CellOutput,
    /// Window stride over the time axis.
    pub stride: usize,
    /// Windows per gradient step; `None` = full batch up to 1000 windows,
    /// then 32.
    pub batch_size: Option<usize>,
    /// Optional global-norm gradient clip.
    pub grad_clip: Option<f64>,
    /// Compute validation RMSE every this many epochs (and always on the
    /// last); 0 disables periodic validation.
    pub val_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            omega: 5,
            tau: 1,
            rho: 0.8,
            d: 8,
            d_out: 8,
            lr: 0.01,
            mu1: 1e-3,
            mu2: 1e-3,
            epochs: 200,
            seed: 7,
            variant: ModelVariant::Net3,
            activation: Activation::Relu,
            cell_output: CellOutput::Logistic,
            stride: 1,
            batch_size: None,
            grad_clip: None,
            val_every: 10,
        }
    }
}

/// One training sample: history indices `[history_start, history_end)` and
/// target indices `[target_start, target_end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub history_start: usize,
    pub history_end: usize,
    pub target_start: usize,
    pub target_end: usize,
}

#[derive(Clone, Debug)]
pub struct WindowSet {
    pub windows: Vec<Window>,
    pub omega: usize,
    pub tau: usize,
}

/// Sliding windows over `t_len` steps: `floor((T - omega - tau)/stride) + 1`
/// of them, each with `omega` history steps and `tau` target steps.
pub fn make_windows(t_len: usize, omega: usize, tau: usize, stride: usize) -> Result<WindowSet> {
    if omega == 0 || tau == 0 {
        return Err(CoreError::InvalidArgument {
            op: "make_windows",
            message: alloc::format!("window lengths must be positive (omega={omega}, tau={tau})"),
        });
    }
    if stride == 0 {
        return Err(CoreError::InvalidArgument {
            op: "make_windows",
            message: alloc::string::String::from("stride must be positive"),
        });
    }
    if t_len < omega + tau {
        return Err(CoreError::EmptySelection { op: "make_windows" });
    }
    let count = (t_len - omega - tau) / stride + 1;
    let windows = (0..count)
        .map(|i| {
            let start = i * stride;
            Window {
                history_start: start,
                history_end: start + omega,
                target_start: start + omega,
                target_end: start + omega + tau,
            }
        })
        .collect();
    Ok(WindowSet {
        windows,
        omega,
        tau,
    })
}

/// Root-mean-square error over the mask-selected entries.
pub fn rmse(pred: &DenseTensor, truth: &DenseTensor, mask: &[bool]) -> Result<f64> {
    if pred.shape() != truth.shape() || mask.len() != pred.len() {
        return Err(CoreError::ShapeMismatch {
            op: "rmse",
            expected: crate::error::shape_string(pred.shape()),
            got: crate::error::shape_string(truth.shape()),
            mode: None,
        });
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (k, (&p, &t)) in pred.data().iter().zip(truth.data().iter()).enumerate() {
        if mask[k] {
            let d = p - t;
            sum += d * d;
            count += 1;
        }
    }
    if count == 0 {
        return Err(CoreError::EmptySelection { op: "rmse" });
    }
    Ok(libm::sqrt(sum / count as f64))
}

/// RMSE over (truth, prediction) pairs.
pub fn rmse_pairs(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(CoreError::EmptySelection { op: "rmse" });
    }
    let sum: f64 = pairs.iter().map(|(t, p)| (t - p) * (t - p)).sum();
    Ok(libm::sqrt(sum / pairs.len() as f64))
}

/// One-step persistence baseline over the test region `t >= boundary`:
/// predicts each snapshot by the (zero-filled) previous one, scored on
/// observed entries.
pub fn persistence_rmse(ds: &NetTensorTimeSeries, boundary: usize) -> Result<f64> {
    let t_len = ds.t_len();
    if boundary == 0 || boundary >= t_len {
        return Err(CoreError::InvalidArgument {
            op: "persistence_rmse",
            message: alloc::format!("boundary {boundary} outside 1..{t_len}"),
        });
    }
    let filled = ds.zero_filled_values();
    let mut pairs = Vec::new();
    for t in boundary..t_len {
        let prev = filled.index_last(t - 1)?;
        let cur = ds.values().index_last(t)?;
        for s in 0..ds.series_count() {
            if ds.mask()[ds.flat_index(s, t)] {
                pairs.push((cur.data()[s], prev.data()[s]));
            }
        }
    }
    rmse_pairs(&pairs)
}

/// Mean-imputation baseline for recovery (in normalized space the per-series
/// training mean is zero): RMSE of predicting 0 for every held-out entry.
pub fn mean_impute_rmse(truth_normalized: &DenseTensor, held_out: &[bool]) -> Result<f64> {
    let pairs: Vec<(f64, f64)> = truth_normalized
        .data()
        .iter()
        .zip(held_out.iter())
        .filter(|(_, &h)| h)
        .map(|(&t, _)| (t, 0.0))
        .collect();
    rmse_pairs(&pairs)
}

/// Teacher-forced one-step predictions for every target step in
/// `targets`: feeds the `omega` preceding (zero-filled) snapshots and scores
/// the prediction at the target step. Returns `(flat index, truth, pred)`
/// for each entry selected by `score_mask`.
pub fn one_step_predictions(
    ds: &NetTensorTimeSeries,
    model: &Net3Params,
    omega: usize,
    targets: core::ops::Range<usize>,
    score_mask: &[bool],
) -> Result<Vec<(usize, f64, f64)>> {
    let t_len = ds.t_len();
    if targets.end > t_len {
        return Err(CoreError::InvalidArgument {
            op: "one_step_predictions",
            message: alloc::format!("target range end {} exceeds T={t_len}", targets.end),
        });
    }
    let filled = ds.zero_filled_values();
    let mut out = Vec::new();
    for t in targets {
        if t < omega {
            continue;
        }
        let window: Vec<DenseTensor> = (t - omega..t)
            .map(|u| filled.index_last(u))
            .collect::<Result<_>>()?;
        let trace = forward(&window, ds.networks(), model)?;
        let pred = trace.last_pred();
        let truth = ds.values().index_last(t)?;
        for s in 0..ds.series_count() {
            let k = ds.flat_index(s, t);
            if score_mask[k] {
                out.push((k, truth.data()[s], pred.data()[s]));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_rmse: Option<f64>,
}

pub struct FitOutput {
    pub model: Net3Params,
    pub history: Vec<EpochRecord>,
}

impl FitOutput {
    pub fn final_train_loss(&self) -> f64 {
        self.history.last().map(|r| r.train_loss).unwrap_or(f64::NAN)
    }
}

/// What to train on: a normalized dataset whose mask marks the trainable
/// observations, windows confined to `[0, train_end)`, and an optional
/// validation boundary for periodic one-step RMSE.
pub struct FitSpec<'a> {
    pub data: &'a NetTensorTimeSeries,
    pub train_end: usize,
    pub val_boundary: Option<usize>,
}

/// Trains a model on shuffled windows with Adam. Deterministic for a fixed
/// `(data, config)`: same seed, same windows, same shuffles, same floats.
pub fn fit(spec: &FitSpec, config: &TrainConfig) -> Result<FitOutput> {
    if config.tau != 1 {
        return Err(CoreError::InvalidArgument {
            op: "fit",
            message: alloc::format!(
                "training uses tau = 1 (got {}); longer horizons are rollouts at prediction time",
                config.tau
            ),
        });
    }
    let ds = spec.data;
    if spec.train_end > ds.t_len() {
        return Err(CoreError::InvalidArgument {
            op: "fit",
            message: alloc::format!(
                "train_end {} exceeds series length {}",
                spec.train_end,
                ds.t_len()
            ),
        });
    }
    let window_set = make_windows(spec.train_end, config.omega, config.tau, config.stride)?;
    let n_windows = window_set.windows.len();

    let model_cfg = Net3Config {
        dims: ds.dims().to_vec(),
        d: config.d,
        d_out: config.d_out,
        rho: config.rho,
        activation: config.activation,
        cell_output: config.cell_output,
        variant: config.variant,
    };
    let mut template = Net3Params::init(&model_cfg, ds.networks(), config.seed)?;
    let mut store = ParamStore::from_model(&template);
    let mut optimizer = AdamState::new(
        &store,
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
    );

    // Precompute per-step inputs, targets and target masks.
    let filled = ds.zero_filled_values();
    let snapshots: Vec<DenseTensor> = (0..spec.train_end)
        .map(|t| filled.index_last(t))
        .collect::<Result<_>>()?;
    let raw_targets: Vec<DenseTensor> = (0..spec.train_end)
        .map(|t| ds.values().index_last(t))
        .collect::<Result<_>>()?;
    let series = ds.series_count();
    let target_masks: Vec<Vec<bool>> = (0..spec.train_end)
        .map(|t| (0..series).map(|s| ds.mask()[ds.flat_index(s, t)]).collect())
        .collect();

    let batch_size = config
        .batch_size
        .unwrap_or(if n_windows > 1000 { 32 } else { n_windows })
        .max(1);
    let mut shuffle_rng = SeededRng::new(config.seed).substream(1);
    let mut order: Vec<usize> = (0..n_windows).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            let mut grads: Option<Vec<DenseTensor>> = None;
            for &wi in batch {
                let w = window_set.windows[wi];
                let window = &snapshots[w.history_start..w.history_end];
                let target = &raw_targets[w.target_start];
                let mask = &target_masks[w.target_start];
                let taped = build_window_loss(
                    &store,
                    &template,
                    ds.networks(),
                    window,
                    target,
                    mask,
                    config.mu1,
                    config.mu2,
                )?;
                epoch_loss += taped.tape.scalar(taped.loss);
                let g = taped.tape.backward(taped.loss)?;
                grads = Some(match grads {
                    None => g,
                    Some(mut acc) => {
                        for (a, b) in acc.iter_mut().zip(g.iter()) {
                            *a = a.add(b);
                        }
                        acc
                    }
                });
            }
            if let Some(mut g) = grads {
                let scale = 1.0 / batch.len() as f64;
                for t in g.iter_mut() {
                    *t = t.scale(scale);
                }
                optimizer.step(&mut store, &g, config.grad_clip)?;
            }
        }
        let train_loss = epoch_loss / n_windows as f64;

        let is_last = epoch + 1 == config.epochs;
        let want_val = spec.val_boundary.is_some()
            && (is_last || (config.val_every > 0 && (epoch + 1) % config.val_every == 0));
        let val_rmse = if want_val {
            let boundary = spec.val_boundary.unwrap();
            store.write_back(&mut template)?;
            let preds = one_step_predictions(
                ds,
                &template,
                config.omega,
                boundary..ds.t_len(),
                ds.mask(),
            )?;
            let pairs: Vec<(f64, f64)> = preds.iter().map(|&(_, t, p)| (t, p)).collect();
            Some(rmse_pairs(&pairs)?)
        } else {
            None
        };
        history.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            val_rmse,
        });
    }

    store.write_back(&mut template)?;
    Ok(FitOutput {
        model: template,
        history,
    })
}

/// Recovers held-out entries: for each time step carrying held-out entries,
/// feeds the `omega` preceding zero-filled snapshots (training observations
/// only) and reads the prediction at the held-out coordinates. Returns
/// `(flat index, truth, pred)` in normalized space.
pub fn recover_predictions(
    train_ds: &NetTensorTimeSeries,
    truth_values: &DenseTensor,
    held_out: &[bool],
    model: &Net3Params,
    omega: usize,
) -> Result<Vec<(usize, f64, f64)>> {
    let t_len = train_ds.t_len();
    if held_out.len() != train_ds.values().len() {
        return Err(CoreError::DataInconsistency {
            message: alloc::format!(
                "held-out mask has {} entries, dataset has {}",
                held_out.len(),
                train_ds.values().len()
            ),
        });
    }
    let filled = train_ds.zero_filled_values();
    let series = train_ds.series_count();
    let mut out = Vec::new();
    for t in omega..t_len {
        let any = (0..series).any(|s| held_out[train_ds.flat_index(s, t)]);
        if !any {
            continue;
        }
        let window: Vec<DenseTensor> = (t - omega..t)
            .map(|u| filled.index_last(u))
            .collect::<Result<_>>()?;
        let trace = forward(&window, train_ds.networks(), model)?;
        let pred = trace.last_pred();
        for s in 0..series {
            let k = train_ds.flat_index(s, t);
            if held_out[k] {
                out.push((k, truth_values.data()[k], pred.data()[s]));
            }
        }
    }
    Ok(out)
}

/// Window loss and gradient at the current parameters (used by tests and the
/// loss-decrease check).
pub fn window_loss_and_grads(
    store: &ParamStore,
    template: &Net3Params,
    ds: &NetTensorTimeSeries,
    window: Window,
    mu1: f64,
    mu2: f64,
) -> Result<(f64, Vec<DenseTensor>)> {
    let filled = ds.zero_filled_values();
    let snapshots: Vec<DenseTensor> = (window.history_start..window.history_end)
        .map(|t| filled.index_last(t))
        .collect::<Result<_>>()?;
    let target = ds.values().index_last(window.target_start)?;
    let series = ds.series_count();
    let mask: Vec<bool> = (0..series)
        .map(|s| ds.mask()[ds.flat_index(s, window.target_start)])
        .collect();
    let taped = build_window_loss(
        store,
        template,
        ds.networks(),
        &snapshots,
        &target,
        &mask,
        mu1,
        mu2,
    )?;
    let loss = taped.tape.scalar(taped.loss);
    let grads = taped.tape.backward(taped.loss)?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{normalize, synthesize, NormStats, SynthConfig};

    fn tiny_teacher(seed: u64, t_len: usize) -> NetTensorTimeSeries {
        let cfg = SynthConfig {
            dims: alloc::vec![3, 2],
            core_dims: alloc::vec![2, 1],
            t_len,
            noise: 0.02,
            spectral_radius: 0.995,
            seed,
        };
        let ds = synthesize(&cfg).unwrap();
        let stats = NormStats::compute(&ds, ds.t_len()).unwrap();
        normalize(&ds, &stats).unwrap()
    }

    #[test]
    fn window_counts() {
        let ws = make_windows(10, 5, 1, 1).unwrap();
        assert_eq!(ws.windows.len(), 5);
        assert_eq!(
            ws.windows[0],
            Window {
                history_start: 0,
                history_end: 5,
                target_start: 5,
                target_end: 6
            }
        );
        // exactly one window at the boundary
        assert_eq!(make_windows(6, 5, 1, 1).unwrap().windows.len(), 1);
        // stride covering everything -> one window
        assert_eq!(make_windows(20, 5, 1, 20).unwrap().windows.len(), 1);
        assert!(make_windows(5, 5, 1, 1).is_err());
    }

    #[test]
    fn rmse_basics() {
        let p = DenseTensor::new(alloc::vec![3], alloc::vec![1.0, 2.0, 3.0]).unwrap();
        let t = p.clone();
        assert_eq!(rmse(&p, &t, &[true, true, true]).unwrap(), 0.0);
        let shifted = p.map(|v| v + 2.0);
        assert!((rmse(&shifted, &p, &[true, true, true]).unwrap() - 2.0).abs() < 1e-15);
        assert!(rmse(&p, &t, &[false, false, false]).is_err());
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn full_model_gradient_matches_finite_differences() {
        // Every parameter block of the three-term objective against central
        // differences on a two-mode desk instance.
        let ds = tiny_teacher(3, 12);
        let model_cfg = Net3Config {
            dims: ds.dims().to_vec(),
            d: 2,
            d_out: 2,
            rho: 0.7,
            activation: Activation::Tanh,
            cell_output: CellOutput::Logistic,
            variant: ModelVariant::Net3,
        };
        let template = Net3Params::init(&model_cfg, ds.networks(), 5).unwrap();
        let store = ParamStore::from_model(&template);
        let window = Window {
            history_start: 0,
            history_end: 3,
            target_start: 3,
            target_end: 4,
        };
        let (_, analytic) =
            window_loss_and_grads(&store, &template, &ds, window, 1e-3, 1e-3).unwrap();

        let h = 1e-5;
        for p in 0..store.len() {
            let mut worst: f64 = 0.0;
            for k in 0..store.get(p).len() {
                let eval = |delta: f64| -> f64 {
                    let mut bumped = store.clone();
                    bumped.tensors_mut()[p].data_mut()[k] += delta;
                    let (l, _) =
                        window_loss_and_grads(&bumped, &template, &ds, window, 1e-3, 1e-3)
                            .unwrap();
                    l
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = analytic[p].data()[k];
                let denom = fd.abs().max(an.abs()).max(1e-6);
                worst = worst.max((fd - an).abs() / denom);
            }
            assert!(
                worst < 1e-4,
                "parameter block {} ({}) worst relative error {worst}",
                p,
                store.names()[p]
            );
        }
    }

    #[test]
    fn small_gradient_step_decreases_loss() {
        let ds = tiny_teacher(4, 12);
        let model_cfg = Net3Config {
            dims: ds.dims().to_vec(),
            d: 2,
            d_out: 2,
            rho: 0.7,
            activation: Activation::Tanh,
            cell_output: CellOutput::Logistic,
            variant: ModelVariant::Net3,
        };
        let template = Net3Params::init(&model_cfg, ds.networks(), 6).unwrap();
        let mut store = ParamStore::from_model(&template);
        let window = Window {
            history_start: 0,
            history_end: 5,
            target_start: 5,
            target_end: 6,
        };
        let (before, grads) =
            window_loss_and_grads(&store, &template, &ds, window, 1e-3, 1e-3).unwrap();
        for (t, g) in store.tensors_mut().iter_mut().zip(grads.iter()) {
            *t = t.sub(&g.scale(1e-4));
        }
        let (after, _) =
            window_loss_and_grads(&store, &template, &ds, window, 1e-3, 1e-3).unwrap();
        assert!(after < before, "loss did not decrease: {before} -> {after}");
    }

    #[test]
    fn three_mode_pipeline_trains_and_checks_gradients() {
        // Everything above runs at two modes; this guards the M = 3 paths
        // (indicator space of 8 terms, three factor contractions, windowed
        // training) end to end, including a finite-difference spot check.
        let cfg = crate::data::SynthConfig {
            dims: alloc::vec![3, 2, 2],
            core_dims: alloc::vec![2, 1, 2],
            t_len: 14,
            noise: 0.05,
            spectral_radius: 0.99,
            seed: 31,
        };
        let raw = crate::data::synthesize(&cfg).unwrap();
        let stats = crate::data::NormStats::compute(&raw, raw.t_len()).unwrap();
        let ds = crate::data::normalize(&raw, &stats).unwrap();

        let model_cfg = Net3Config {
            dims: ds.dims().to_vec(),
            d: 2,
            d_out: 2,
            rho: 0.6,
            activation: Activation::Tanh,
            cell_output: CellOutput::Logistic,
            variant: ModelVariant::Net3,
        };
        let template = Net3Params::init(&model_cfg, ds.networks(), 19).unwrap();
        let store = ParamStore::from_model(&template);
        let window = Window {
            history_start: 0,
            history_end: 3,
            target_start: 3,
            target_end: 4,
        };
        let (_, analytic) =
            window_loss_and_grads(&store, &template, &ds, window, 1e-3, 1e-3).unwrap();
        // spot-check a handful of coordinates in every block
        let h = 1e-5;
        for p in 0..store.len() {
            for k in (0..store.get(p).len()).step_by(7.max(store.get(p).len() / 3)) {
                let eval = |delta: f64| -> f64 {
                    let mut bumped = store.clone();
                    bumped.tensors_mut()[p].data_mut()[k] += delta;
                    window_loss_and_grads(&bumped, &template, &ds, window, 1e-3, 1e-3)
                        .unwrap()
                        .0
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = analytic[p].data()[k];
                let denom = fd.abs().max(an.abs()).max(1e-6);
                assert!(
                    (fd - an).abs() / denom < 1e-4,
                    "{} [{}]: fd {fd} vs analytic {an}",
                    store.names()[p],
                    k
                );
            }
        }

        // a short fit runs and the rollout keeps the snapshot shape
        let config = TrainConfig {
            omega: 3,
            d: 2,
            d_out: 2,
            rho: 0.6,
            epochs: 2,
            seed: 19,
            activation: Activation::Tanh,
            val_every: 0,
            ..TrainConfig::default()
        };
        let spec = FitSpec {
            data: &ds,
            train_end: ds.t_len(),
            val_boundary: None,
        };
        let out = fit(&spec, &config).unwrap();
        let filled = ds.zero_filled_values();
        let history: Vec<DenseTensor> = (10..13)
            .map(|t| filled.index_last(t).unwrap())
            .collect();
        let preds =
            crate::model::predict_multi_step(&history, ds.networks(), &out.model, 2).unwrap();
        assert_eq!(preds[0].shape(), &[3, 2, 2]);
        assert_eq!(preds[1].shape(), &[3, 2, 2]);
    }

    #[test]
    fn zero_prediction_error_gives_zero_gradient() {
        // With the penalty weights off and the target set to the model's
        // own prediction, the objective is exactly zero and so is every
        // parameter gradient.
        let ds = tiny_teacher(5, 10);
        let model_cfg = Net3Config {
            dims: ds.dims().to_vec(),
            d: 2,
            d_out: 2,
            rho: 0.7,
            activation: Activation::Tanh,
            cell_output: CellOutput::Logistic,
            variant: ModelVariant::Net3,
        };
        let template = Net3Params::init(&model_cfg, ds.networks(), 7).unwrap();
        let store = ParamStore::from_model(&template);
        let filled = ds.zero_filled_values();
        let window: Vec<DenseTensor> = (0..3).map(|t| filled.index_last(t).unwrap()).collect();
        let trace = forward(&window, ds.networks(), &template).unwrap();
        let target = trace.last_pred().clone();
        let mask = alloc::vec![true; target.len()];
        let taped = build_window_loss(
            &store,
            &template,
            ds.networks(),
            &window,
            &target,
            &mask,
            0.0,
            0.0,
        )
        .unwrap();
        assert_eq!(taped.tape.scalar(taped.loss), 0.0);
        let grads = taped.tape.backward(taped.loss).unwrap();
        for (g, name) in grads.iter().zip(store.names()) {
            assert!(
                g.data().iter().all(|&v| v == 0.0),
                "nonzero gradient in {name}"
            );
        }
    }

    #[test]
    fn fit_is_bit_reproducible() {
        let ds = tiny_teacher(8, 20);
        let config = TrainConfig {
            omega: 4,
            d: 2,
            d_out: 2,
            rho: 0.7,
            epochs: 3,
            seed: 9,
            activation: Activation::Tanh,
            ..TrainConfig::default()
        };
        let spec = FitSpec {
            data: &ds,
            train_end: ds.t_len(),
            val_boundary: None,
        };
        let run = || {
            let out = fit(&spec, &config).unwrap();
            let mut flat: Vec<f64> = Vec::new();
            out.model
                .for_each_param(|_, t| flat.extend_from_slice(t.data()));
            (
                flat,
                out.history
                    .iter()
                    .map(|r| r.train_loss)
                    .collect::<Vec<_>>(),
            )
        };
        let (p1, l1) = run();
        let (p2, l2) = run();
        assert_eq!(p1, p2);
        assert_eq!(l1, l2);
    }

    #[test]
    fn loss_nonincreasing_early_on_teacher() {
        // Regression guard: with a small learning rate, the first epochs on
        // the synthetic teacher do not increase the training loss.
        let ds = tiny_teacher(10, 30);
        let config = TrainConfig {
            omega: 4,
            d: 3,
            d_out: 3,
            rho: 0.7,
            lr: 1e-3,
            epochs: 5,
            seed: 11,
            activation: Activation::Tanh,
            ..TrainConfig::default()
        };
        let spec = FitSpec {
            data: &ds,
            train_end: ds.t_len(),
            val_boundary: None,
        };
        let out = fit(&spec, &config).unwrap();
        for pair in out.history.windows(2) {
            assert!(
                pair[1].train_loss <= pair[0].train_loss + 1e-12,
                "loss increased: {} -> {}",
                pair[0].train_loss,
                pair[1].train_loss
            );
        }
    }

    #[test]
    fn rollout_on_constant_teacher_stays_near_constant() {
        // A constant tensor series normalizes to zeros; the trained model's
        // multi-step rollout stays near the constant (zero, normalized).
        use crate::model::predict_multi_step;
        let mut values = DenseTensor::zeros(&[2, 2, 30]);
        for s in 0..4 {
            for t in 0..30 {
                values.data_mut()[s * 30 + t] = 3.0 + s as f64;
            }
        }
        let nets = alloc::vec![
            crate::graph::ModeNetwork::identity(2),
            crate::graph::ModeNetwork::identity(2)
        ];
        let raw = crate::data::NetTensorTimeSeries::new(values, nets, None).unwrap();
        let stats = crate::data::NormStats::compute(&raw, 30).unwrap();
        assert!(stats.constant.iter().all(|&c| c));
        let ds = crate::data::normalize(&raw, &stats).unwrap();
        let config = TrainConfig {
            omega: 4,
            d: 2,
            d_out: 2,
            rho: 1.0,
            lr: 0.02,
            epochs: 80,
            seed: 15,
            activation: Activation::Tanh,
            val_every: 0,
            ..TrainConfig::default()
        };
        let spec = FitSpec {
            data: &ds,
            train_end: ds.t_len(),
            val_boundary: None,
        };
        let out = fit(&spec, &config).unwrap();
        let filled = ds.zero_filled_values();
        let history: Vec<DenseTensor> = (26..30)
            .map(|t| filled.index_last(t).unwrap())
            .collect();
        let preds = predict_multi_step(&history, ds.networks(), &out.model, 3).unwrap();
        assert_eq!(preds.len(), 3);
        for (j, p) in preds.iter().enumerate() {
            let worst = p.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(worst < 0.05, "rollout step {j} drifted to {worst}");
        }
    }

    #[test]
    fn fit_beats_persistence_on_teacher() {
        // After a couple hundred epochs the train loss sits below what
        // repeating the previous snapshot would score on the same windows.
        let ds = tiny_teacher(12, 40);
        let config = TrainConfig {
            omega: 4,
            d: 3,
            d_out: 3,
            rho: 0.7,
            lr: 0.01,
            epochs: 200,
            seed: 13,
            activation: Activation::Tanh,
            val_every: 0,
            ..TrainConfig::default()
        };
        let spec = FitSpec {
            data: &ds,
            train_end: ds.t_len(),
            val_boundary: None,
        };
        let out = fit(&spec, &config).unwrap();

        let ws = make_windows(ds.t_len(), config.omega, 1, 1).unwrap();
        let mut persist = 0.0;
        for w in &ws.windows {
            let prev = ds.values().index_last(w.history_end - 1).unwrap();
            let tgt = ds.values().index_last(w.target_start).unwrap();
            let d = prev.sub(&tgt);
            persist += d.data().iter().map(|v| v * v).sum::<f64>();
        }
        persist /= ws.windows.len() as f64;
        assert!(
            out.final_train_loss() < persist,
            "train loss {} not below persistence {persist}",
            out.final_train_loss()
        );
    }
}
