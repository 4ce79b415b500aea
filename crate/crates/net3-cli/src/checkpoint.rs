//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//! magic `NET3CKPT`, version u32, metadata length u64 + JSON metadata (the
//! run configuration echo plus normalization statistics), parameter count
//! u64, then per parameter: name (u64 length + UTF-8), order u64, dims
//! (u64 each), values (f64 each). Writing is deterministic: same model and
//! metadata, same bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use net3_core::data::NormStats;
use net3_core::graph::ModeNetwork;
use net3_core::model::{ModelVariant, Net3Config, Net3Params};
use net3_core::tensor::DenseTensor;
use net3_core::tgcn::Activation;
use net3_core::train::TrainConfig;
use net3_core::trnn::CellOutput;

pub const MAGIC: &[u8; 8] = b"NET3CKPT";
pub const VERSION: u32 = 1;

/// Everything needed to rebuild and reuse the model: shapes, hyperparameters,
/// the training split, and the normalization statistics of the run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub dims: Vec<usize>,
    pub d: usize,
    pub d_out: usize,
    pub rho: f64,
    pub variant: String,
    pub activation: String,
    pub cell_output: String,
    pub omega: usize,
    pub tau: usize,
    pub lr: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Boundary of the training region the normalization statistics came
    /// from (equal to the series length for recovery runs).
    pub train_end: usize,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
    pub norm_constant: Vec<bool>,
}

impl CheckpointMeta {
    pub fn new(config: &TrainConfig, dims: &[usize], train_end: usize, stats: &NormStats) -> Self {
        Self {
            dims: dims.to_vec(),
            d: config.d,
            d_out: config.d_out,
            rho: config.rho,
            variant: config.variant.name().to_string(),
            activation: activation_name(config.activation).to_string(),
            cell_output: cell_output_name(config.cell_output).to_string(),
            omega: config.omega,
            tau: config.tau,
            lr: config.lr,
            mu1: config.mu1,
            mu2: config.mu2,
            epochs: config.epochs,
            seed: config.seed,
            train_end,
            norm_mean: stats.mean.clone(),
            norm_std: stats.std.clone(),
            norm_constant: stats.constant.clone(),
        }
    }

    pub fn stats(&self) -> NormStats {
        NormStats {
            mean: self.norm_mean.clone(),
            std: self.norm_std.clone(),
            constant: self.norm_constant.clone(),
        }
    }

    pub fn model_config(&self) -> Result<Net3Config> {
        Ok(Net3Config {
            dims: self.dims.clone(),
            d: self.d,
            d_out: self.d_out,
            rho: self.rho,
            activation: parse_activation(&self.activation)?,
            cell_output: parse_cell_output(&self.cell_output)?,
            variant: ModelVariant::parse(&self.variant)
                .with_context(|| format!("unknown variant {:?}", self.variant))?,
        })
    }
}

pub fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Tanh => "tanh",
        Activation::Identity => "identity",
    }
}

pub fn parse_activation(s: &str) -> Result<Activation> {
    match s {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        "identity" => Ok(Activation::Identity),
        other => bail!("unknown activation {other:?} (relu|tanh|identity)"),
    }
}

pub fn cell_output_name(c: CellOutput) -> &'static str {
    match c {
        CellOutput::Logistic => "logistic",
        CellOutput::Tanh => "tanh",
    }
}

pub fn parse_cell_output(s: &str) -> Result<CellOutput> {
    match s {
        "logistic" => Ok(CellOutput::Logistic),
        "tanh" => Ok(CellOutput::Tanh),
        other => bail!("unknown cell output {other:?} (logistic|tanh)"),
    }
}

pub fn save_checkpoint(path: &Path, meta: &CheckpointMeta, model: &Net3Params) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let meta_json = serde_json::to_vec(meta)?;
    buf.extend_from_slice(&(meta_json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&meta_json);

    let mut params: Vec<(String, DenseTensor)> = Vec::new();
    model.for_each_param(|name, t| params.push((name.to_string(), t.clone())));
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for (name, tensor) in &params {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u64).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.extend_from_slice(&(tensor.order() as u64).to_le_bytes());
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file =
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    file.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            bail!("checkpoint truncated at byte {}", self.pos);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointMeta, Vec<(String, DenseTensor)>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut r = Reader {
        buf: &bytes,
        pos: 0,
    };
    if r.take(8)? != MAGIC {
        bail!("{} is not a model checkpoint (bad magic)", path.display());
    }
    let version = r.u32()?;
    if version != VERSION {
        bail!("checkpoint version {version} unsupported (expected {VERSION})");
    }
    let meta_len = r.u64()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)?;
    let count = r.u64()? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u64()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())?;
        let order = r.u64()? as usize;
        let mut shape = Vec::with_capacity(order);
        for _ in 0..order {
            shape.push(r.u64()? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(r.f64()?);
        }
        params.push((name, DenseTensor::new(shape, data)?));
    }
    if r.pos != bytes.len() {
        bail!("{} trailing bytes after checkpoint payload", bytes.len() - r.pos);
    }
    Ok((meta, params))
}

/// Rebuilds the model from a checkpoint, validating parameter names and
/// shapes against the recorded configuration.
pub fn rebuild_model(
    meta: &CheckpointMeta,
    params: &[(String, DenseTensor)],
    nets: &[ModeNetwork],
) -> Result<Net3Params> {
    let cfg = meta.model_config()?;
    let mut model = Net3Params::init(&cfg, nets, meta.seed)?;
    let mut expected_names = Vec::new();
    model.for_each_param(|name, _| expected_names.push(name.to_string()));
    if expected_names.len() != params.len() {
        bail!(
            "checkpoint holds {} parameters, model needs {}",
            params.len(),
            expected_names.len()
        );
    }
    for (want, (got, _)) in expected_names.iter().zip(params.iter()) {
        if want != got {
            bail!("checkpoint parameter order mismatch: expected {want}, found {got}");
        }
    }
    let tensors: Vec<&DenseTensor> = params.iter().map(|(_, t)| t).collect();
    model.assign_params(tensors.into_iter())?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use net3_core::train::TrainConfig;
    use tempfile::tempdir;

    fn sample() -> (CheckpointMeta, Net3Params, Vec<ModeNetwork>) {
        let config = TrainConfig {
            d: 3,
            d_out: 2,
            rho: 0.7,
            ..TrainConfig::default()
        };
        let dims = vec![3, 2];
        let stats = NormStats {
            mean: vec![0.0; 6],
            std: vec![1.0; 6],
            constant: vec![false; 6],
        };
        let meta = CheckpointMeta::new(&config, &dims, 10, &stats);
        let nets = vec![ModeNetwork::identity(3), ModeNetwork::identity(2)];
        let model = Net3Params::init(&meta.model_config().unwrap(), &nets, config.seed).unwrap();
        (meta, model, nets)
    }

    #[test]
    fn round_trip_preserves_everything() {
        let (meta, model, nets) = sample();
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.net3");
        save_checkpoint(&path, &meta, &model).unwrap();
        let (meta2, params) = load_checkpoint(&path).unwrap();
        assert_eq!(meta2.dims, meta.dims);
        assert_eq!(meta2.seed, meta.seed);
        let rebuilt = rebuild_model(&meta2, &params, &nets).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        model.for_each_param(|_, t| a.extend_from_slice(t.data()));
        rebuilt.for_each_param(|_, t| b.extend_from_slice(t.data()));
        assert_eq!(a, b);
    }

    #[test]
    fn writing_twice_gives_identical_bytes() {
        let (meta, model, _) = sample();
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("a.net3");
        let p2 = dir.path().join("b.net3");
        save_checkpoint(&p1, &meta, &model).unwrap();
        save_checkpoint(&p2, &meta, &model).unwrap();
        assert_eq!(fs::read(p1).unwrap(), fs::read(p2).unwrap());
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("junk.net3");
        fs::write(&path, b"NOTACKPT........").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn truncated_checkpoint_rejected() {
        let (meta, model, _) = sample();
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.net3");
        save_checkpoint(&path, &meta, &model).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
