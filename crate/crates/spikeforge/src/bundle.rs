//! Model bundle: `model.json` manifest plus a `weights.bin` blob of
//! little-endian `f32` tensors.
//!
//! ```json
//! {
//!   "format_version": "1.0",
//!   "input_shape": [1, 8, 8],
//!   "layers": [
//!     {"kind": "conv2d", "stride": 1, "padding": 1,
//!      "weight": {"shape": [8, 1, 3, 3], "offset": 0},
//!      "bias": {"shape": [8], "offset": 288}},
//!     {"kind": "relu"},
//!     {"kind": "maxpool2d", "kernel": 2, "stride": 2}
//!   ]
//! }
//! ```
//!
//! Offsets are byte offsets into the blob. Tensors must appear in ascending,
//! non-overlapping order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use spikeforge_core::{AnnModel, BatchNorm2d, Conv2d, Layer, Linear, Pool2d, Tensor};

use crate::error::{IoError, Result};

/// Major manifest version this reader understands.
pub const FORMAT_MAJOR: u32 = 1;
/// Version written by [`save_bundle`].
pub const FORMAT_VERSION: &str = "1.0";
/// Manifest file name inside a bundle directory.
pub const MANIFEST_FILE: &str = "model.json";
/// Default blob file name.
pub const WEIGHTS_FILE: &str = "weights.bin";

const KNOWN_KINDS: [&str; 7] = ["conv2d", "linear", "relu", "batchnorm2d", "maxpool2d", "avgpool2d", "flatten"];

/// Location of one tensor in the blob.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRef {
    /// Dimensions.
    pub shape: Vec<usize>,
    /// Byte offset.
    pub offset: u64,
}

impl TensorRef {
    fn byte_len(&self) -> u64 {
        4 * self.shape.iter().product::<usize>() as u64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum LayerEntry {
    Conv2d { stride: usize, padding: usize, weight: TensorRef, bias: TensorRef },
    Linear { weight: TensorRef, bias: TensorRef },
    Relu,
    Batchnorm2d { epsilon: f32, gamma: TensorRef, beta: TensorRef, running_mean: TensorRef, running_var: TensorRef },
    Maxpool2d { kernel: usize, stride: usize },
    Avgpool2d { kernel: usize, stride: usize },
    Flatten,
}

impl LayerEntry {
    fn tensors(&self) -> Vec<&TensorRef> {
        match self {
            LayerEntry::Conv2d { weight, bias, .. } | LayerEntry::Linear { weight, bias } => vec![weight, bias],
            LayerEntry::Batchnorm2d { gamma, beta, running_mean, running_var, .. } => {
                vec![gamma, beta, running_mean, running_var]
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest<L> {
    format_version: String,
    input_shape: Vec<usize>,
    #[serde(default = "default_weights", skip_serializing_if = "is_default_weights")]
    weights: String,
    layers: Vec<L>,
}

fn default_weights() -> String {
    WEIGHTS_FILE.to_string()
}

fn is_default_weights(s: &str) -> bool {
    s == WEIGHTS_FILE
}

/// Resolves a bundle path: a directory means `<dir>/model.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

pub(crate) fn check_version(version: &str, path: &Path) -> Result<()> {
    let major = version.split('.').next().and_then(|m| m.parse::<u32>().ok());
    if major == Some(FORMAT_MAJOR) {
        Ok(())
    } else {
        Err(IoError::UnsupportedVersion { path: path.to_path_buf(), version: version.to_string() })
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(bytes: &[u8], path: &Path) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|source| IoError::Json { path: path.to_path_buf(), source })
}

pub(crate) fn decode_f32(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
}

fn read_tensor(blob: &[u8], r: &TensorRef, blob_path: &Path) -> Result<Tensor> {
    let start = r.offset as usize;
    let end = start + r.byte_len() as usize;
    let bytes = blob.get(start..end).ok_or_else(|| IoError::Truncated {
        path: blob_path.to_path_buf(),
        needed: end as u64,
        actual: blob.len() as u64,
    })?;
    Ok(Tensor::new(r.shape.clone(), decode_f32(bytes))?)
}

/// Reads and validates a bundle. `path` is the bundle directory or its
/// `model.json`.
pub fn load_bundle(path: &Path) -> Result<AnnModel> {
    let manifest_path = manifest_path(path);
    let raw: Manifest<Value> = parse_json(&read_file(&manifest_path)?, &manifest_path)?;
    check_version(&raw.format_version, &manifest_path)?;
    let blob_path = manifest_path.parent().unwrap_or(Path::new(".")).join(&raw.weights);
    let blob = read_file(&blob_path)?;
    build_model(raw, &blob, &blob_path)
}

/// Parses a manifest and blob held in memory.
pub fn decode_bundle(manifest: &[u8], blob: &[u8]) -> Result<AnnModel> {
    let path = Path::new(MANIFEST_FILE);
    let raw: Manifest<Value> = parse_json(manifest, path)?;
    check_version(&raw.format_version, path)?;
    build_model(raw, blob, Path::new(WEIGHTS_FILE))
}

fn build_model(raw: Manifest<Value>, blob: &[u8], blob_path: &Path) -> Result<AnnModel> {
    let mut entries = Vec::with_capacity(raw.layers.len());
    for (index, value) in raw.layers.into_iter().enumerate() {
        let kind = value.get("kind").and_then(Value::as_str).unwrap_or("").to_string();
        if !KNOWN_KINDS.contains(&kind.as_str()) {
            return Err(IoError::UnsupportedLayer { index, kind });
        }
        let entry: LayerEntry =
            serde_json::from_value(value).map_err(|e| IoError::Manifest { index, reason: e.to_string() })?;
        entries.push(entry);
    }

    let mut cursor = 0u64;
    for (index, entry) in entries.iter().enumerate() {
        for r in entry.tensors() {
            if r.offset < cursor {
                return Err(IoError::Manifest {
                    index,
                    reason: format!(
                        "tensor at offset {} overlaps or precedes the previous tensor (ends at {cursor})",
                        r.offset
                    ),
                });
            }
            cursor = r.offset + r.byte_len();
            if cursor > blob.len() as u64 {
                return Err(IoError::Truncated {
                    path: blob_path.to_path_buf(),
                    needed: cursor,
                    actual: blob.len() as u64,
                });
            }
        }
    }

    let tensor = |r: &TensorRef| read_tensor(blob, r, blob_path);
    let mut layers = Vec::with_capacity(entries.len());
    for entry in &entries {
        layers.push(match entry {
            LayerEntry::Conv2d { stride, padding, weight, bias } => Layer::Conv2d(Conv2d {
                weight: tensor(weight)?,
                bias: tensor(bias)?,
                stride: *stride,
                padding: *padding,
            }),
            LayerEntry::Linear { weight, bias } => {
                Layer::Linear(Linear { weight: tensor(weight)?, bias: tensor(bias)? })
            }
            LayerEntry::Relu => Layer::Relu,
            LayerEntry::Batchnorm2d { epsilon, gamma, beta, running_mean, running_var } => {
                Layer::BatchNorm2d(BatchNorm2d {
                    gamma: tensor(gamma)?,
                    beta: tensor(beta)?,
                    running_mean: tensor(running_mean)?,
                    running_var: tensor(running_var)?,
                    epsilon: *epsilon,
                })
            }
            LayerEntry::Maxpool2d { kernel, stride } => Layer::MaxPool2d(Pool2d { kernel: *kernel, stride: *stride }),
            LayerEntry::Avgpool2d { kernel, stride } => Layer::AvgPool2d(Pool2d { kernel: *kernel, stride: *stride }),
            LayerEntry::Flatten => Layer::Flatten,
        });
    }
    Ok(AnnModel::new(raw.input_shape, layers)?)
}

struct BlobWriter {
    blob: Vec<u8>,
}

impl BlobWriter {
    fn push(&mut self, t: &Tensor) -> TensorRef {
        let offset = self.blob.len() as u64;
        for v in t.data() {
            self.blob.extend_from_slice(&v.to_le_bytes());
        }
        TensorRef { shape: t.shape().to_vec(), offset }
    }
}

/// Serializes a model into manifest text and blob bytes.
pub fn encode_bundle(model: &AnnModel) -> (String, Vec<u8>) {
    let mut w = BlobWriter { blob: Vec::new() };
    let layers = model
        .layers()
        .iter()
        .map(|layer| match layer {
            Layer::Conv2d(c) => LayerEntry::Conv2d {
                stride: c.stride,
                padding: c.padding,
                weight: w.push(&c.weight),
                bias: w.push(&c.bias),
            },
            Layer::Linear(l) => LayerEntry::Linear { weight: w.push(&l.weight), bias: w.push(&l.bias) },
            Layer::Relu => LayerEntry::Relu,
            Layer::BatchNorm2d(bn) => LayerEntry::Batchnorm2d {
                epsilon: bn.epsilon,
                gamma: w.push(&bn.gamma),
                beta: w.push(&bn.beta),
                running_mean: w.push(&bn.running_mean),
                running_var: w.push(&bn.running_var),
            },
            Layer::MaxPool2d(p) => LayerEntry::Maxpool2d { kernel: p.kernel, stride: p.stride },
            Layer::AvgPool2d(p) => LayerEntry::Avgpool2d { kernel: p.kernel, stride: p.stride },
            Layer::Flatten => LayerEntry::Flatten,
        })
        .collect();
    let manifest = Manifest {
        format_version: FORMAT_VERSION.to_string(),
        input_shape: model.input_shape().to_vec(),
        weights: default_weights(),
        layers,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    (text, w.blob)
}

/// Writes `model.json` and `weights.bin` into directory `dir`, creating it
/// if needed.
pub fn save_bundle(model: &AnnModel, dir: &Path) -> Result<()> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| IoError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let (manifest, blob) = encode_bundle(model);
    let blob_path = dir.join(WEIGHTS_FILE);
    fs::write(&blob_path, blob).map_err(io(&blob_path))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, manifest).map_err(io(&manifest_path))?;
    Ok(())
}
