//! Run configuration: defaults, optional flat key=value config file, and
//! command-line overrides, merged with precedence flags > file > defaults.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

use net3_core::model::ModelVariant;
use net3_core::train::TrainConfig;

use crate::checkpoint::{parse_activation, parse_cell_output};

/// Optional overrides gathered from flags or a config file. `None` means
/// "not set here".
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub omega: Option<usize>,
    pub tau: Option<usize>,
    pub rho: Option<f64>,
    pub d: Option<usize>,
    pub d_out: Option<usize>,
    pub lr: Option<f64>,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub variant: Option<String>,
    pub activation: Option<String>,
    pub cell_output: Option<String>,
    pub stride: Option<usize>,
    pub batch_size: Option<usize>,
    pub grad_clip: Option<f64>,
    pub val_every: Option<usize>,
    pub future_fraction: Option<f64>,
    pub missing_fraction: Option<f64>,
}

impl Overrides {
    /// `self` wins over `fallback`.
    pub fn or(self, fallback: Overrides) -> Overrides {
        Overrides {
            omega: self.omega.or(fallback.omega),
            tau: self.tau.or(fallback.tau),
            rho: self.rho.or(fallback.rho),
            d: self.d.or(fallback.d),
            d_out: self.d_out.or(fallback.d_out),
            lr: self.lr.or(fallback.lr),
            mu1: self.mu1.or(fallback.mu1),
            mu2: self.mu2.or(fallback.mu2),
            epochs: self.epochs.or(fallback.epochs),
            seed: self.seed.or(fallback.seed),
            variant: self.variant.or(fallback.variant),
            activation: self.activation.or(fallback.activation),
            cell_output: self.cell_output.or(fallback.cell_output),
            stride: self.stride.or(fallback.stride),
            batch_size: self.batch_size.or(fallback.batch_size),
            grad_clip: self.grad_clip.or(fallback.grad_clip),
            val_every: self.val_every.or(fallback.val_every),
            future_fraction: self.future_fraction.or(fallback.future_fraction),
            missing_fraction: self.missing_fraction.or(fallback.missing_fraction),
        }
    }

    /// Materializes the core training configuration over the defaults.
    pub fn resolve_train(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        if let Some(v) = self.omega {
            cfg.omega = v;
        }
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = self.rho {
            cfg.rho = v;
        }
        if let Some(v) = self.d {
            cfg.d = v;
        }
        if let Some(v) = self.d_out {
            cfg.d_out = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.mu1 {
            cfg.mu1 = v;
        }
        if let Some(v) = self.mu2 {
            cfg.mu2 = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.variant {
            cfg.variant = ModelVariant::parse(v)
                .with_context(|| format!("unknown variant {v:?} (net3|itgcn|gcn-flat|mlstm|lstm)"))?;
        }
        if let Some(v) = &self.activation {
            cfg.activation = parse_activation(v)?;
        }
        if let Some(v) = &self.cell_output {
            cfg.cell_output = parse_cell_output(v)?;
        }
        if let Some(v) = self.stride {
            cfg.stride = v;
        }
        if self.batch_size.is_some() {
            cfg.batch_size = self.batch_size;
        }
        if self.grad_clip.is_some() {
            cfg.grad_clip = self.grad_clip;
        }
        if let Some(v) = self.val_every {
            cfg.val_every = v;
        }
        Ok(cfg)
    }
}

/// Parses a flat `key=value` config file; `#` starts a comment.
pub fn parse_config_file(path: &Path) -> Result<Overrides> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!(
                "{}:{}: expected key=value, got {:?}",
                path.display(),
                lineno + 1,
                raw
            );
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }

    let mut o = Overrides::default();
    for (key, value) in &map {
        let parse_err = || format!("{}: bad value {value:?} for {key}", path.display());
        match key.as_str() {
            "omega" => o.omega = Some(value.parse().with_context(parse_err)?),
            "tau" => o.tau = Some(value.parse().with_context(parse_err)?),
            "rho" => o.rho = Some(value.parse().with_context(parse_err)?),
            "d" => o.d = Some(value.parse().with_context(parse_err)?),
            "d_out" => o.d_out = Some(value.parse().with_context(parse_err)?),
            "lr" => o.lr = Some(value.parse().with_context(parse_err)?),
            "mu1" => o.mu1 = Some(value.parse().with_context(parse_err)?),
            "mu2" => o.mu2 = Some(value.parse().with_context(parse_err)?),
            "epochs" => o.epochs = Some(value.parse().with_context(parse_err)?),
            "seed" => o.seed = Some(value.parse().with_context(parse_err)?),
            "variant" => o.variant = Some(value.clone()),
            "activation" => o.activation = Some(value.clone()),
            "cell_output" => o.cell_output = Some(value.clone()),
            "stride" => o.stride = Some(value.parse().with_context(parse_err)?),
            "batch_size" => o.batch_size = Some(value.parse().with_context(parse_err)?),
            "grad_clip" => o.grad_clip = Some(value.parse().with_context(parse_err)?),
            "val_every" => o.val_every = Some(value.parse().with_context(parse_err)?),
            "future_fraction" => {
                o.future_fraction = Some(value.parse().with_context(parse_err)?)
            }
            "missing_fraction" => {
                o.missing_fraction = Some(value.parse().with_context(parse_err)?)
            }
            other => bail!("{}: unknown config key {other:?}", path.display()),
        }
    }
    Ok(o)
}

/// Parses a comma-separated dimension list such as `54,4`.
pub fn parse_dims(s: &str) -> Result<Vec<usize>> {
    let dims: Vec<usize> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .with_context(|| format!("bad dimension {p:?} in {s:?}"))
        })
        .collect::<Result<_>>()?;
    if dims.is_empty() || dims.contains(&0) {
        bail!("dimensions must be positive, got {s:?}");
    }
    Ok(dims)
}
