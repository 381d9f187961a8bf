use std::path::PathBuf;

use thiserror::Error;

/// Errors from file IO, format validation and the run pipeline.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: invalid JSON: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: unsupported format version {version:?}")]
    UnsupportedVersion { path: PathBuf, version: String },
    #[error("layer {index}: unsupported layer kind {kind:?}")]
    UnsupportedLayer { index: usize, kind: String },
    #[error("layer {index}: {reason}")]
    Manifest { index: usize, reason: String },
    #[error("{path}: truncated, needs {needed} bytes but has {actual}")]
    Truncated { path: PathBuf, needed: u64, actual: u64 },
    #[error("{path}: {reason}")]
    Dataset { path: PathBuf, reason: String },
    #[error("{path}: sample shape {actual:?} does not match model input {expected:?}")]
    DimMismatch { path: PathBuf, expected: Vec<usize>, actual: Vec<usize> },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] spikeforge_core::Error),
}

pub type Result<T> = std::result::Result<T, IoError>;
