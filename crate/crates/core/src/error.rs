use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by model evaluation, conversion and simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor data does not match its shape, or contains a non-finite value.
    InvalidTensor(String),
    /// A layer's parameters are inconsistent with each other.
    InvalidLayer {
        /// Index of the offending layer.
        layer: usize,
        /// What is wrong with it.
        reason: String,
    },
    /// Shape propagation failed at `layer`.
    Shape {
        /// Index of the layer that rejected its input.
        layer: usize,
        /// What the layer accepts.
        expected: String,
        /// The shape it was given.
        actual: Vec<usize>,
    },
    /// The input tensor does not match the model's input shape.
    InputShape {
        /// Shape declared by the model.
        expected: Vec<usize>,
        /// Shape of the provided input.
        actual: Vec<usize>,
    },
    /// A layer produced NaN or infinity.
    NonFinite {
        /// Index of the layer whose output was not finite.
        layer: usize,
    },
    /// The layer sequence violates a structural requirement (e.g. batchnorm
    /// without a preceding convolution).
    Structure {
        /// Index of the offending layer.
        layer: usize,
        /// What is wrong.
        reason: String,
    },
    /// Normalization statistics have no scale for a layer that needs one.
    MissingScale {
        /// Activation site (layer index) with no recorded scale.
        layer: usize,
    },
    /// An out-of-range hyperparameter (percentile, gamma, threshold, horizon).
    InvalidConfig(String),
    /// Calibration data contained no samples.
    EmptyCalibration,
    /// A trace and a reference do not describe the same network.
    TraceMismatch(String),
}

/// Result alias for this crate.
pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidTensor(reason) => write!(f, "invalid tensor: {reason}"),
            Error::InvalidLayer { layer, reason } => write!(f, "layer {layer}: {reason}"),
            Error::Shape { layer, expected, actual } => {
                write!(f, "layer {layer}: expected input {expected}, got {actual:?}")
            }
            Error::InputShape { expected, actual } => {
                write!(f, "input shape {actual:?} does not match model input {expected:?}")
            }
            Error::NonFinite { layer } => write!(f, "layer {layer} produced a non-finite value"),
            Error::Structure { layer, reason } => write!(f, "layer {layer}: {reason}"),
            Error::MissingScale { layer } => {
                write!(f, "no normalization scale recorded for activation site {layer}")
            }
            Error::InvalidConfig(reason) => write!(f, "invalid configuration: {reason}"),
            Error::EmptyCalibration => f.write_str("calibration set is empty"),
            Error::TraceMismatch(reason) => write!(f, "trace does not match reference: {reason}"),
        }
    }
}

impl core::error::Error for Error {}
