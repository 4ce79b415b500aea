//! The batch commands behind the CLI subcommands. Each returns the JSON
//! metrics object that `main` prints as a single line; artifacts (checkpoint,
//! training log, prediction CSVs) land in the run's output directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

use net3_core::data::{
    denormalize_value, normalize, split_future, split_recovery, synthesize, NetTensorTimeSeries,
    NormStats, SynthConfig,
};
use net3_core::model::{predict_multi_step, Net3Params};
use net3_core::tensor::DenseTensor;
use net3_core::train::{
    fit, mean_impute_rmse, one_step_predictions, persistence_rmse, recover_predictions,
    rmse_pairs, FitSpec, TrainConfig,
};
use net3_core::trnn::{count_params_mlstm, count_params_tlstm, rho_upper_bound};

use crate::checkpoint::{load_checkpoint, rebuild_model, save_checkpoint, CheckpointMeta};
use crate::io::{load_dataset, save_dataset};

pub const CHECKPOINT_FILE: &str = "checkpoint.net3";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";

fn ensure_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output dir {}", out.display()))
}

/// Decodes a flat series index into its per-mode index tuple.
fn decode_series(dims: &[usize], mut s: usize) -> Vec<usize> {
    let mut idx = vec![0usize; dims.len()];
    for m in (0..dims.len()).rev() {
        idx[m] = s % dims[m];
        s /= dims[m];
    }
    idx
}

struct PredictionRow {
    series: usize,
    t: usize,
    truth_norm: f64,
    pred_norm: f64,
}

/// Writes `(index tuple, t, truth, prediction)` rows, both raw and
/// normalized scales.
fn write_prediction_csv(
    path: &Path,
    dims: &[usize],
    t_len: usize,
    stats: &NormStats,
    rows: &[PredictionRow],
) -> Result<()> {
    let _ = t_len;
    let mut out = String::new();
    for m in 0..dims.len() {
        out.push_str(&format!("idx_{},", m + 1));
    }
    out.push_str("t,truth,prediction,truth_normalized,prediction_normalized\n");
    for row in rows {
        for i in decode_series(dims, row.series) {
            out.push_str(&format!("{i},"));
        }
        let truth_raw = denormalize_value(stats, row.series, row.truth_norm);
        let pred_raw = denormalize_value(stats, row.series, row.pred_norm);
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.t, truth_raw, pred_raw, row.truth_norm, row.pred_norm
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn rmse_both(stats: &NormStats, rows: &[PredictionRow]) -> Result<(f64, f64)> {
    let norm_pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.truth_norm, r.pred_norm)).collect();
    let raw_pairs: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| {
            (
                denormalize_value(stats, r.series, r.truth_norm),
                denormalize_value(stats, r.series, r.pred_norm),
            )
        })
        .collect();
    Ok((rmse_pairs(&norm_pairs)?, rmse_pairs(&raw_pairs)?))
}

pub fn cmd_train(
    data_dir: &Path,
    out_dir: &Path,
    config: &TrainConfig,
    future_fraction: f64,
) -> Result<Value> {
    let (ds, _) = load_dataset(data_dir)?;
    let boundary = split_future(&ds, future_fraction)?;
    let stats = NormStats::compute(&ds, boundary)?;
    let normed = normalize(&ds, &stats)?;

    let spec = FitSpec {
        data: &normed,
        train_end: boundary,
        val_boundary: Some(boundary),
    };
    let fit_out = fit(&spec, config)?;

    ensure_out_dir(out_dir)?;
    let log_path = out_dir.join(TRAIN_LOG_FILE);
    {
        let mut log = fs::File::create(&log_path)?;
        for rec in &fit_out.history {
            let mut line = json!({
                "epoch": rec.epoch,
                "train_loss": rec.train_loss,
            });
            if let Some(v) = rec.val_rmse {
                line["val_rmse"] = json!(v);
            }
            writeln!(log, "{line}")?;
        }
    }

    let ckpt_path = out_dir.join(CHECKPOINT_FILE);
    let meta = CheckpointMeta::new(config, ds.dims(), boundary, &stats);
    save_checkpoint(&ckpt_path, &meta, &fit_out.model)?;

    // Final validation sweep, normalized and raw.
    let preds = one_step_predictions(
        &normed,
        &fit_out.model,
        config.omega,
        boundary..normed.t_len(),
        normed.mask(),
    )?;
    let t_len = normed.t_len();
    let rows: Vec<PredictionRow> = preds
        .iter()
        .map(|&(k, truth, pred)| PredictionRow {
            series: k / t_len,
            t: k % t_len,
            truth_norm: truth,
            pred_norm: pred,
        })
        .collect();
    let (val_norm, val_raw) = rmse_both(&stats, &rows)?;
    let persistence = persistence_rmse(&normed, boundary)?;

    Ok(json!({
        "command": "train",
        "data": data_dir.display().to_string(),
        "variant": config.variant.name(),
        "epochs": config.epochs,
        "seed": config.seed,
        "train_boundary": boundary,
        "final_train_loss": fit_out.final_train_loss(),
        "val_rmse_normalized": val_norm,
        "val_rmse_raw": val_raw,
        "persistence_rmse_normalized": persistence,
        "checkpoint": ckpt_path.display().to_string(),
        "train_log": log_path.display().to_string(),
    }))
}

fn load_model_for(
    ds: &NetTensorTimeSeries,
    checkpoint: &Path,
) -> Result<(CheckpointMeta, Net3Params)> {
    let (meta, params) = load_checkpoint(checkpoint)?;
    if meta.dims != ds.dims() {
        bail!(
            "checkpoint was trained on dims {:?}, dataset has {:?}",
            meta.dims,
            ds.dims()
        );
    }
    if meta.norm_mean.len() != ds.series_count() {
        bail!(
            "checkpoint normalization covers {} series, dataset has {}",
            meta.norm_mean.len(),
            ds.series_count()
        );
    }
    let model = rebuild_model(&meta, &params, ds.networks())?;
    Ok((meta, model))
}

/// Iterative rollout over the future split: consumes the last `omega`
/// observed steps before the boundary and feeds each prediction back.
pub fn cmd_predict(
    data_dir: &Path,
    checkpoint: &Path,
    out_dir: &Path,
    horizon: Option<usize>,
) -> Result<Value> {
    let (ds, _) = load_dataset(data_dir)?;
    let (meta, model) = load_model_for(&ds, checkpoint)?;
    let stats = meta.stats();
    let normed = normalize(&ds, &stats)?;
    let t_len = normed.t_len();
    let boundary = meta.train_end;
    if boundary < meta.omega || boundary >= t_len {
        bail!(
            "checkpoint boundary {boundary} incompatible with T={t_len} and omega={}",
            meta.omega
        );
    }
    let available = t_len - boundary;
    let horizon = horizon.unwrap_or(available);
    if horizon == 0 {
        bail!("horizon must be at least 1");
    }
    if horizon > available {
        bail!("horizon {horizon} exceeds the {available} future steps in the dataset");
    }

    let filled = normed.zero_filled_values();
    let history: Vec<DenseTensor> = (boundary - meta.omega..boundary)
        .map(|t| filled.index_last(t))
        .collect::<net3_core::Result<_>>()?;
    let preds = predict_multi_step(&history, normed.networks(), &model, horizon)?;

    let mut rows = Vec::new();
    for (j, pred) in preds.iter().enumerate() {
        let t = boundary + j;
        let truth = normed.values().index_last(t)?;
        for s in 0..normed.series_count() {
            if normed.mask()[normed.flat_index(s, t)] {
                rows.push(PredictionRow {
                    series: s,
                    t,
                    truth_norm: truth.data()[s],
                    pred_norm: pred.data()[s],
                });
            }
        }
    }
    ensure_out_dir(out_dir)?;
    let csv_path = out_dir.join("predictions.csv");
    write_prediction_csv(&csv_path, ds.dims(), t_len, &stats, &rows)?;
    let (rmse_norm, rmse_raw) = rmse_both(&stats, &rows)?;

    // Repeat-last-observation over the same horizon.
    let last_obs = filled.index_last(boundary - 1)?;
    let persist_pairs: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.truth_norm, last_obs.data()[r.series]))
        .collect();
    let persistence = rmse_pairs(&persist_pairs)?;

    Ok(json!({
        "command": "predict",
        "data": data_dir.display().to_string(),
        "checkpoint": checkpoint.display().to_string(),
        "boundary": boundary,
        "horizon": horizon,
        "entries": rows.len(),
        "rmse_normalized": rmse_norm,
        "rmse_raw": rmse_raw,
        "persistence_rmse_normalized": persistence,
        "csv": csv_path.display().to_string(),
    }))
}

/// Teacher-forced one-step evaluation over the future split.
pub fn cmd_eval(data_dir: &Path, checkpoint: &Path, out_dir: &Path) -> Result<Value> {
    let (ds, _) = load_dataset(data_dir)?;
    let (meta, model) = load_model_for(&ds, checkpoint)?;
    let stats = meta.stats();
    let normed = normalize(&ds, &stats)?;
    let t_len = normed.t_len();
    let boundary = meta.train_end;
    if boundary >= t_len {
        bail!("checkpoint boundary {boundary} leaves no test region (T={t_len})");
    }
    let preds = one_step_predictions(&normed, &model, meta.omega, boundary..t_len, normed.mask())?;
    let rows: Vec<PredictionRow> = preds
        .iter()
        .map(|&(k, truth, pred)| PredictionRow {
            series: k / t_len,
            t: k % t_len,
            truth_norm: truth,
            pred_norm: pred,
        })
        .collect();
    ensure_out_dir(out_dir)?;
    let csv_path = out_dir.join("one_step.csv");
    write_prediction_csv(&csv_path, ds.dims(), t_len, &stats, &rows)?;
    let (rmse_norm, rmse_raw) = rmse_both(&stats, &rows)?;
    let persistence = persistence_rmse(&normed, boundary)?;

    Ok(json!({
        "command": "eval",
        "data": data_dir.display().to_string(),
        "checkpoint": checkpoint.display().to_string(),
        "boundary": boundary,
        "entries": rows.len(),
        "rmse_normalized": rmse_norm,
        "rmse_raw": rmse_raw,
        "persistence_rmse_normalized": persistence,
        "csv": csv_path.display().to_string(),
    }))
}

/// Holds out a fraction of the observed entries, trains on the rest (or
/// reuses a checkpoint), and scores the recovered values.
pub fn cmd_recover(
    data_dir: &Path,
    out_dir: &Path,
    config: &TrainConfig,
    missing_fraction: f64,
    checkpoint: Option<&Path>,
) -> Result<Value> {
    let (ds, _) = load_dataset(data_dir)?;
    let held_out = split_recovery(&ds, missing_fraction, config.seed, config.omega)?;
    let held_count = held_out.iter().filter(|&&h| h).count();
    let train_mask: Vec<bool> = ds
        .mask()
        .iter()
        .zip(held_out.iter())
        .map(|(&obs, &held)| obs && !held)
        .collect();
    let train_ds = ds.with_mask(train_mask)?;

    let t_len = ds.t_len();
    ensure_out_dir(out_dir)?;
    // A reused checkpoint brings its own normalization statistics (the model
    // only understands inputs in the scale it was trained in); a fresh fit
    // derives them from this split's training observations.
    let (model, trained, meta, stats) = match checkpoint {
        Some(path) => {
            let (meta, model) = load_model_for(&ds, path)?;
            let stats = meta.stats();
            (model, false, meta, stats)
        }
        None => {
            let stats = NormStats::compute(&train_ds, t_len)?;
            let normed_train = normalize(&train_ds, &stats)?;
            let spec = FitSpec {
                data: &normed_train,
                train_end: t_len,
                val_boundary: None,
            };
            let fit_out = fit(&spec, config)?;
            let meta = CheckpointMeta::new(config, ds.dims(), t_len, &stats);
            let ckpt_path = out_dir.join(CHECKPOINT_FILE);
            save_checkpoint(&ckpt_path, &meta, &fit_out.model)?;
            // training log for the recovery fit as well
            let mut log = fs::File::create(out_dir.join(TRAIN_LOG_FILE))?;
            for rec in &fit_out.history {
                writeln!(
                    log,
                    "{}",
                    json!({"epoch": rec.epoch, "train_loss": rec.train_loss})
                )?;
            }
            (fit_out.model, true, meta, stats)
        }
    };
    let normed_train = normalize(&train_ds, &stats)?;
    let normed_truth = normalize(&ds, &stats)?;

    let preds = recover_predictions(
        &normed_train,
        normed_truth.values(),
        &held_out,
        &model,
        meta.omega,
    )?;
    let rows: Vec<PredictionRow> = preds
        .iter()
        .map(|&(k, truth, pred)| PredictionRow {
            series: k / t_len,
            t: k % t_len,
            truth_norm: truth,
            pred_norm: pred,
        })
        .collect();
    let csv_path = out_dir.join("recovered.csv");
    write_prediction_csv(&csv_path, ds.dims(), t_len, &stats, &rows)?;
    let (rmse_norm, rmse_raw) = rmse_both(&stats, &rows)?;
    let mean_baseline = mean_impute_rmse(normed_truth.values(), &held_out)?;

    Ok(json!({
        "command": "recover",
        "data": data_dir.display().to_string(),
        "missing_fraction": missing_fraction,
        "held_out_entries": held_count,
        "scored_entries": rows.len(),
        "seed": config.seed,
        "trained": trained,
        "rmse_normalized": rmse_norm,
        "rmse_raw": rmse_raw,
        "mean_impute_rmse_normalized": mean_baseline,
        "checkpoint": checkpoint
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| out_dir.join(CHECKPOINT_FILE).display().to_string()),
        "csv": csv_path.display().to_string(),
    }))
}

/// Parameter-count table for the compressed cell versus per-series cells.
pub fn cmd_params(dims: &[usize], rho: f64, d: usize, d_out: usize) -> Result<Value> {
    let tlstm = count_params_tlstm(dims, rho, d, d_out)?;
    let mlstm = count_params_mlstm(dims, d, d_out);
    let reduction = 100.0 * (1.0 - tlstm as f64 / mlstm as f64);
    let rho_max = rho_upper_bound(dims, d, d_out);
    let mut out = json!({
        "command": "params",
        "dims": dims,
        "rho": rho,
        "d": d,
        "d_prime": d_out,
        "tlstm_params": tlstm,
        "mlstm_params": mlstm,
        "reduction_percent": (reduction * 100.0).round() / 100.0,
        "rho_max": rho_max,
    });
    if rho > rho_max {
        out["warning"] = json!(format!(
            "rho {rho} exceeds rho_max {rho_max:.4}; parameter reduction is not guaranteed (reduction {reduction:.2}%)"
        ));
    } else if reduction <= 0.0 {
        out["warning"] = json!(format!(
            "reduction {reduction:.2}% <= 0 despite rho <= rho_max (ceiling-rounded core dims)"
        ));
    }
    Ok(out)
}

pub fn cmd_rho_bound(dims: &[usize], d: usize, d_out: usize) -> Result<Value> {
    Ok(json!({
        "command": "rho-bound",
        "dims": dims,
        "d": d,
        "d_prime": d_out,
        "rho_max": rho_upper_bound(dims, d, d_out),
    }))
}

/// Generates a synthetic dataset directory.
pub fn cmd_synth(out_dir: &Path, cfg: &SynthConfig) -> Result<Value> {
    let ds = synthesize(cfg)?;
    save_dataset(out_dir, &ds, None)?;
    Ok(json!({
        "command": "synth",
        "out": out_dir.display().to_string(),
        "shape": ds.values().shape(),
        "core_dims": cfg.core_dims,
        "noise": cfg.noise,
        "spectral_radius": cfg.spectral_radius,
        "seed": cfg.seed,
    }))
}

/// Output directory helper shared by main.
pub fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
