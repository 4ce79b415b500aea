//! Dataset directory format.
//!
//! A dataset is a directory holding:
//! - `manifest` - JSON: tensor shape (time last), optional mode names, one
//!   network file name or null per non-time mode, payload file names, dtype
//!   and endianness;
//! - `values.bin` - 64-bit little-endian floats, row-major, time last;
//! - `mask.bin` (optional) - one byte per entry, 1 = observed;
//! - `net_<m>.csv` - square, header-free, comma-separated adjacency for
//!   mode m (1-based in the file name).
//!
//! Every payload size is validated against the manifest before use. A mode
//! with a null/absent network entry gets the identity network.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use net3_core::data::NetTensorTimeSeries;
use net3_core::graph::ModeNetwork;
use net3_core::matrix::Matrix;
use net3_core::tensor::DenseTensor;

pub const MANIFEST_NAME: &str = "manifest";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    /// Full tensor shape including the trailing time dimension.
    pub shape: Vec<usize>,
    /// Optional names for the non-time modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_names: Option<Vec<String>>,
    /// One entry per non-time mode; null means the identity network.
    pub networks: Vec<Option<String>>,
    pub values: String,
    pub dtype: String,
    pub endianness: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

pub fn load_dataset(dir: &Path) -> Result<(NetTensorTimeSeries, Manifest)> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let manifest_text = fs::read_to_string(&manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let manifest: Manifest =
        serde_json::from_str(&manifest_text).context("parsing dataset manifest")?;

    if manifest.dtype != "f64" {
        bail!("unsupported dtype {:?} (only f64)", manifest.dtype);
    }
    if manifest.endianness != "little" {
        bail!(
            "unsupported endianness {:?} (only little)",
            manifest.endianness
        );
    }
    if manifest.shape.len() < 2 {
        bail!(
            "manifest shape must include at least one data mode plus time, got {:?}",
            manifest.shape
        );
    }
    let modes = manifest.shape.len() - 1;
    if manifest.networks.len() != modes {
        bail!(
            "manifest lists {} networks for {} non-time modes",
            manifest.networks.len(),
            modes
        );
    }
    if let Some(names) = &manifest.mode_names {
        if names.len() != modes {
            bail!(
                "manifest lists {} mode names for {} non-time modes",
                names.len(),
                modes
            );
        }
    }
    let total: usize = manifest.shape.iter().product();

    let values_path = dir.join(&manifest.values);
    let raw = fs::read(&values_path)
        .with_context(|| format!("reading {}", values_path.display()))?;
    if raw.len() != total * 8 {
        bail!(
            "{} holds {} bytes, manifest shape {:?} needs {}",
            values_path.display(),
            raw.len(),
            manifest.shape,
            total * 8
        );
    }
    let data: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let values = DenseTensor::new(manifest.shape.clone(), data)?;

    let mask = match &manifest.mask {
        Some(name) => {
            let mask_path = dir.join(name);
            let bytes = fs::read(&mask_path)
                .with_context(|| format!("reading {}", mask_path.display()))?;
            if bytes.len() != total {
                bail!(
                    "{} holds {} bytes, expected {} (one per entry)",
                    mask_path.display(),
                    bytes.len(),
                    total
                );
            }
            let mut mask = Vec::with_capacity(total);
            for (i, b) in bytes.iter().enumerate() {
                match b {
                    0 => mask.push(false),
                    1 => mask.push(true),
                    other => bail!("mask byte at {i} is {other}, expected 0 or 1"),
                }
            }
            Some(mask)
        }
        None => None,
    };

    let mut networks = Vec::with_capacity(modes);
    for (m, entry) in manifest.networks.iter().enumerate() {
        let n_m = manifest.shape[m];
        match entry {
            None => networks.push(ModeNetwork::identity(n_m)),
            Some(file) => {
                let net_path = dir.join(file);
                let adj = read_adjacency_csv(&net_path, n_m)?;
                networks.push(ModeNetwork::new(adj).with_context(|| {
                    format!("validating network for mode {m} ({file})")
                })?);
            }
        }
    }

    let ds = NetTensorTimeSeries::new(values, networks, mask)?;
    Ok((ds, manifest))
}

/// Writes a dataset directory. Identity networks get null manifest entries;
/// the mask file is only written when some entry is unobserved.
pub fn save_dataset(
    dir: &Path,
    ds: &NetTensorTimeSeries,
    mode_names: Option<Vec<String>>,
) -> Result<Manifest> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let shape = ds.values().shape().to_vec();

    let mut bytes = Vec::with_capacity(ds.values().len() * 8);
    for v in ds.values().data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join("values.bin"), &bytes)?;

    let mask_name = if ds.mask().iter().all(|&b| b) {
        None
    } else {
        let mask_bytes: Vec<u8> = ds.mask().iter().map(|&b| b as u8).collect();
        fs::write(dir.join("mask.bin"), &mask_bytes)?;
        Some("mask.bin".to_string())
    };

    let mut network_entries = Vec::with_capacity(ds.networks().len());
    for (m, net) in ds.networks().iter().enumerate() {
        if net.is_identity() {
            network_entries.push(None);
        } else {
            let name = format!("net_{}.csv", m + 1);
            write_adjacency_csv(&dir.join(&name), net.raw())?;
            network_entries.push(Some(name));
        }
    }

    let manifest = Manifest {
        shape,
        mode_names,
        networks: network_entries,
        values: "values.bin".to_string(),
        dtype: "f64".to_string(),
        endianness: "little".to_string(),
        mask: mask_name,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join(MANIFEST_NAME), text)?;
    Ok(manifest)
}

fn read_adjacency_csv(path: &Path, expect_dim: usize) -> Result<Matrix> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().with_context(|| {
                    format!("{}:{}: bad number {:?}", path.display(), lineno + 1, cell)
                })
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.len() != expect_dim {
        bail!(
            "{}: {} rows, mode dimension is {}",
            path.display(),
            rows.len(),
            expect_dim
        );
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != expect_dim {
            bail!(
                "{}: row {} has {} columns, expected {}",
                path.display(),
                i + 1,
                row.len(),
                expect_dim
            );
        }
    }
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Matrix::new(expect_dim, expect_dim, data)?)
}

fn write_adjacency_csv(path: &Path, adj: &Matrix) -> Result<()> {
    let mut out = String::new();
    for r in 0..adj.rows() {
        for c in 0..adj.cols() {
            if c > 0 {
                out.push(',');
            }
            // shortest round-trip formatting keeps the values bit-exact
            out.push_str(&format!("{}", adj.get(r, c)));
        }
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Resolves a dataset directory argument.
pub fn dataset_dir(arg: &Path) -> PathBuf {
    arg.to_path_buf()
}
