//! Batch command-line front end for networked tensor time series models:
//! train, predict forward, recover missing values, evaluate, and inspect the
//! parameter-count arithmetic. Metrics go to stdout as one JSON line;
//! artifacts go to the output directory.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use net3_cli::commands;
use net3_cli::config::{parse_config_file, parse_dims, Overrides};
use net3_core::data::SynthConfig;

#[derive(Parser)]
#[command(
    name = "net3",
    about = "Forecasting and missing-value recovery for networked tensor time series",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct HyperArgs {
    /// Flat key=value config file (flags override it).
    #[arg(long)]
    config: Option<PathBuf>,
    /// History steps per window.
    #[arg(long)]
    omega: Option<usize>,
    /// Future steps per training window.
    #[arg(long)]
    tau: Option<usize>,
    /// Interaction degree (core dims = ceil(rho * N)).
    #[arg(long)]
    rho: Option<f64>,
    /// Embedding channels.
    #[arg(long)]
    d: Option<usize>,
    /// Hidden channels.
    #[arg(long = "d-out")]
    d_out: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Core-reconstruction penalty weight.
    #[arg(long)]
    mu1: Option<f64>,
    /// Factor-orthonormality penalty weight.
    #[arg(long)]
    mu2: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Model variant: net3 | itgcn | gcn-flat | mlstm | lstm.
    #[arg(long)]
    variant: Option<String>,
    /// Graph-layer activation: relu | tanh | identity.
    #[arg(long)]
    activation: Option<String>,
    /// Cell memory squash in the output equation: logistic | tanh.
    #[arg(long = "cell-output")]
    cell_output: Option<String>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    /// Global-norm gradient clip.
    #[arg(long = "grad-clip")]
    grad_clip: Option<f64>,
    /// Validation cadence in epochs (0 = final epoch only).
    #[arg(long = "val-every")]
    val_every: Option<usize>,
}

impl HyperArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            omega: self.omega,
            tau: self.tau,
            rho: self.rho,
            d: self.d,
            d_out: self.d_out,
            lr: self.lr,
            mu1: self.mu1,
            mu2: self.mu2,
            epochs: self.epochs,
            seed: self.seed,
            variant: self.variant.clone(),
            activation: self.activation.clone(),
            cell_output: self.cell_output.clone(),
            stride: self.stride,
            batch_size: self.batch_size,
            grad_clip: self.grad_clip,
            val_every: self.val_every,
            ..Overrides::default()
        }
    }

    /// flags (incl. `extra`) > config file > defaults.
    fn merged(&self, extra: Overrides) -> Result<Overrides> {
        let mut merged = extra.or(self.overrides());
        if let Some(path) = &self.config {
            let from_file = parse_config_file(path)?;
            merged = merged.or(from_file);
        }
        Ok(merged)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on the history side of a future split.
    Train {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for the checkpoint and training log.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Fraction of trailing time steps held out as the future split.
        #[arg(long = "future-fraction")]
        future_fraction: Option<f64>,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Roll the model forward over the future split, feeding predictions back.
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Steps to predict (default: the whole future split).
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Hold out observed entries, train on the rest, and recover them.
    Recover {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Fraction of observed entries to hold out.
        #[arg(long = "missing-fraction")]
        missing_fraction: Option<f64>,
        /// Reuse a trained checkpoint instead of training on the split.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Teacher-forced one-step evaluation of a checkpoint on the future split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Parameter counts of the compressed cell vs per-series cells.
    Params {
        /// Mode dimensions, comma-separated (e.g. 54,4).
        dims: String,
        rho: f64,
        d: usize,
        d_prime: usize,
    },
    /// Largest interaction degree with guaranteed parameter reduction.
    RhoBound {
        /// Mode dimensions, comma-separated.
        dims: String,
        d: usize,
        d_prime: usize,
    },
    /// Generate a synthetic low-rank teacher dataset.
    Synth {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Mode dimensions, comma-separated.
        #[arg(long, default_value = "6,4")]
        dims: String,
        /// Latent core dimensions, comma-separated.
        #[arg(long = "core-dims", default_value = "3,2")]
        core_dims: String,
        /// Number of time steps.
        #[arg(long, default_value_t = 400)]
        t: usize,
        /// Measurement noise standard deviation.
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        /// Spectral radius of the latent transition (must be < 1).
        #[arg(long = "spectral-radius", default_value_t = 0.999)]
        spectral_radius: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn run() -> Result<serde_json::Value> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train {
            data,
            out,
            future_fraction,
            hyper,
        } => {
            let merged = hyper.merged(Overrides {
                future_fraction,
                ..Overrides::default()
            })?;
            let fraction = merged.future_fraction.unwrap_or(0.1);
            let config = merged.resolve_train()?;
            commands::cmd_train(&data, &out, &config, fraction)
        }
        Command::Predict {
            data,
            checkpoint,
            out,
            horizon,
        } => commands::cmd_predict(&data, &checkpoint, &out, horizon),
        Command::Recover {
            data,
            out,
            missing_fraction,
            checkpoint,
            hyper,
        } => {
            let merged = hyper.merged(Overrides {
                missing_fraction,
                ..Overrides::default()
            })?;
            let fraction = merged.missing_fraction.unwrap_or(0.2);
            let config = merged.resolve_train()?;
            commands::cmd_recover(&data, &out, &config, fraction, checkpoint.as_deref())
        }
        Command::Eval {
            data,
            checkpoint,
            out,
        } => commands::cmd_eval(&data, &checkpoint, &out),
        Command::Params {
            dims,
            rho,
            d,
            d_prime,
        } => commands::cmd_params(&parse_dims(&dims)?, rho, d, d_prime),
        Command::RhoBound { dims, d, d_prime } => {
            commands::cmd_rho_bound(&parse_dims(&dims)?, d, d_prime)
        }
        Command::Synth {
            out,
            dims,
            core_dims,
            t,
            noise,
            spectral_radius,
            seed,
        } => {
            let cfg = SynthConfig {
                dims: parse_dims(&dims)?,
                core_dims: parse_dims(&core_dims)?,
                t_len: t,
                noise,
                spectral_radius,
                seed,
            };
            commands::cmd_synth(&out, &cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    match run() {
        Ok(metrics) => {
            println!("{metrics}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
