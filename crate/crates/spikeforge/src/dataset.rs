//! Calibration and evaluation sets: a JSON descriptor plus a raw
//! little-endian `f32` blob of `count` samples of `shape`.
//!
//! ```json
//! {"format_version": "1.0", "count": 64, "shape": [1, 8, 8],
//!  "dtype": "f32", "data": "calib.bin", "labels": [0, 3, 1]}
//! ```
//!
//! `labels` is optional; when present it has `count` entries.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spikeforge_core::Tensor;

use crate::bundle::{check_version, decode_f32, parse_json, read_file, FORMAT_VERSION};
use crate::error::{IoError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Descriptor {
    format_version: String,
    count: usize,
    shape: Vec<usize>,
    dtype: String,
    data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<u32>>,
}

/// Samples and optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Per-sample shape.
    pub shape: Vec<usize>,
    /// Samples in file order.
    pub samples: Vec<Tensor>,
    /// Class labels, one per sample.
    pub labels: Option<Vec<u32>>,
}

impl Dataset {
    /// Number of samples.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// True when there are no samples.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn descriptor_path(path: &Path, default_name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(default_name)
    } else {
        path.to_path_buf()
    }
}

/// Loads a data set. `path` is the descriptor or a directory holding
/// `default_name`. When `expected` is given every sample must have that
/// shape. Empty sets are rejected.
pub fn load_dataset(path: &Path, default_name: &str, expected: Option<&[usize]>) -> Result<Dataset> {
    let path = descriptor_path(path, default_name);
    let bad = |reason: String| IoError::Dataset { path: path.clone(), reason };
    let desc: Descriptor = parse_json(&read_file(&path)?, &path)?;
    check_version(&desc.format_version, &path)?;
    if desc.dtype != "f32" {
        return Err(bad(format!("unsupported dtype {:?}", desc.dtype)));
    }
    if desc.count == 0 {
        return Err(bad("data set is empty".into()));
    }
    if let Some(expected) = expected {
        if desc.shape != expected {
            return Err(IoError::DimMismatch { path, expected: expected.to_vec(), actual: desc.shape });
        }
    }
    if let Some(labels) = &desc.labels {
        if labels.len() != desc.count {
            return Err(bad(format!("{} labels for {} samples", labels.len(), desc.count)));
        }
    }
    let per_sample: usize = desc.shape.iter().product();
    if per_sample == 0 {
        return Err(bad(format!("invalid sample shape {:?}", desc.shape)));
    }
    let blob_path = path.parent().unwrap_or(Path::new(".")).join(&desc.data);
    let blob = read_file(&blob_path)?;
    let needed = (desc.count * per_sample * 4) as u64;
    if (blob.len() as u64) < needed {
        return Err(IoError::Truncated { path: blob_path, needed, actual: blob.len() as u64 });
    }
    let values = decode_f32(&blob[..needed as usize]);
    let samples = values
        .chunks_exact(per_sample)
        .map(|c| Tensor::new(desc.shape.clone(), c.to_vec()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Dataset { shape: desc.shape, samples, labels: desc.labels })
}

/// Loads a calibration set (`calib.json` when `path` is a directory).
pub fn load_calibration(path: &Path, expected: Option<&[usize]>) -> Result<Dataset> {
    load_dataset(path, "calib.json", expected)
}

/// Writes `<stem>.json` and `<stem>.bin` into `dir`.
pub fn save_dataset(data: &Dataset, dir: &Path, stem: &str) -> Result<()> {
    let io = |path: PathBuf| move |source| IoError::Io { path, source };
    fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
    let mut blob = Vec::new();
    for s in &data.samples {
        for v in s.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let data_name = format!("{stem}.bin");
    let desc = Descriptor {
        format_version: FORMAT_VERSION.into(),
        count: data.samples.len(),
        shape: data.shape.clone(),
        dtype: "f32".into(),
        data: data_name.clone(),
        labels: data.labels.clone(),
    };
    let blob_path = dir.join(&data_name);
    fs::write(&blob_path, blob).map_err(io(blob_path.clone()))?;
    let json_path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string(&desc).expect("descriptor serializes");
    fs::write(&json_path, text).map_err(io(json_path.clone()))?;
    Ok(())
}
