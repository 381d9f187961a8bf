//! Converted spiking network description.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{Conv2d, Linear, Pool2d};

/// How a max pooling layer behaves in the spiking network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum PoolingMode {
    /// Replace with average pooling (linear, fractional output current).
    #[cfg_attr(feature = "serde", serde(rename = "avg"))]
    Average,
    /// Forward spikes of the input with the highest cumulative count.
    #[cfg_attr(feature = "serde", serde(rename = "max-rate"))]
    MaxRate,
    /// Lateral-inhibition pooling: emit increments of the running maximum
    /// of cumulative input counts.
    #[default]
    #[cfg_attr(feature = "serde", serde(rename = "lip"))]
    Lip,
}

impl PoolingMode {
    /// Every mode, in CLI order.
    pub const ALL: [PoolingMode; 3] = [PoolingMode::Average, PoolingMode::MaxRate, PoolingMode::Lip];

    /// Command-line spelling.
    pub fn as_str(self) -> &'static str {
        match self {
            PoolingMode::Average => "avg",
            PoolingMode::MaxRate => "max-rate",
            PoolingMode::Lip => "lip",
        }
    }
}

impl fmt::Display for PoolingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PoolingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" | "average" => Ok(PoolingMode::Average),
            "max-rate" | "max_rate" | "maxrate" => Ok(PoolingMode::MaxRate),
            "lip" => Ok(PoolingMode::Lip),
            other => {
                Err(Error::InvalidConfig(format!("unknown pooling mode {other:?} (expected avg, max-rate or lip)")))
            }
        }
    }
}

/// Conversion hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SnnConfig {
    /// Maximum spikes a neuron may emit in one step (Γ). 1 is plain IF.
    pub gamma_cap: u32,
    /// Behaviour of converted max pooling layers.
    pub pooling: PoolingMode,
    /// Firing threshold of every spiking stage.
    pub v_threshold: f32,
    /// Input scale λ₀; the encoder injects `input / input_scale` each step.
    pub input_scale: f32,
    /// Default simulation horizon T.
    pub horizon: usize,
}

impl Default for SnnConfig {
    fn default() -> Self {
        Self { gamma_cap: 1, pooling: PoolingMode::Lip, v_threshold: 1.0, input_scale: 1.0, horizon: 64 }
    }
}

impl SnnConfig {
    /// Checks the ranges: `gamma_cap >= 1`, positive finite threshold and
    /// input scale, `horizon >= 1`.
    pub fn validate(&self) -> Result<()> {
        if self.gamma_cap < 1 {
            return Err(Error::InvalidConfig(format!("gamma must be at least 1, got {}", self.gamma_cap)));
        }
        if !(self.v_threshold > 0.0 && self.v_threshold.is_finite()) {
            return Err(Error::InvalidConfig(format!("threshold must be positive, got {}", self.v_threshold)));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("input scale must be positive, got {}", self.input_scale)));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidConfig("horizon T must be at least 1".into()));
        }
        Ok(())
    }
}

/// One stage of a converted network. Stage `i` corresponds to layer `i` of
/// the source model.
#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    /// Convolution with normalized parameters; bias is injected every step.
    Conv2d(Conv2d),
    /// Dense layer with normalized parameters.
    Linear(Linear),
    /// Burst integrate-and-fire neurons in place of a ReLU.
    Spiking,
    /// Converted max pooling layer.
    MaxPool {
        /// Selected behaviour.
        mode: PoolingMode,
        /// Window geometry.
        pool: Pool2d,
    },
    /// Average pooling, linear in spike counts.
    AvgPool(Pool2d),
    /// Reshape only.
    Flatten,
}

/// Short tag of a stage for traces and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StageKind {
    /// Convolution.
    Conv2d,
    /// Dense.
    Linear,
    /// Spiking neurons.
    Spiking,
    /// Converted max pooling.
    MaxPool,
    /// Average pooling.
    AvgPool,
    /// Reshape.
    Flatten,
}

impl StageKind {
    /// Lower-case name.
    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::Conv2d => "conv2d",
            StageKind::Linear => "linear",
            StageKind::Spiking => "spiking",
            StageKind::MaxPool => "maxpool",
            StageKind::AvgPool => "avgpool",
            StageKind::Flatten => "flatten",
        }
    }
}

impl Stage {
    /// The stage's tag.
    pub fn kind(&self) -> StageKind {
        match self {
            Stage::Conv2d(_) => StageKind::Conv2d,
            Stage::Linear(_) => StageKind::Linear,
            Stage::Spiking => StageKind::Spiking,
            Stage::MaxPool { .. } => StageKind::MaxPool,
            Stage::AvgPool(_) => StageKind::AvgPool,
            Stage::Flatten => StageKind::Flatten,
        }
    }

    /// True for conv2d and linear stages.
    pub fn is_weighted(&self) -> bool {
        matches!(self, Stage::Conv2d(_) | Stage::Linear(_))
    }
}

/// A converted network, immutable after [`crate::build_snn`].
#[derive(Debug, Clone, PartialEq)]
pub struct SnnNetwork {
    pub(crate) input_shape: Vec<usize>,
    pub(crate) stages: Vec<Stage>,
    pub(crate) shapes: Vec<Vec<usize>>,
    /// Synaptic fan-out of every input element of each weighted stage.
    pub(crate) fanout: Vec<Vec<u32>>,
    pub(crate) readout: usize,
    pub(crate) config: SnnConfig,
}

impl SnnNetwork {
    /// Shape of one input sample.
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Stages in evaluation order.
    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Output shape of every stage.
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    /// Input shape of stage `i`.
    pub fn stage_input_shape(&self, i: usize) -> &[usize] {
        if i == 0 {
            &self.input_shape
        } else {
            &self.shapes[i - 1]
        }
    }

    /// Index of the final weighted stage, whose current is accumulated as
    /// the network output.
    pub fn readout(&self) -> usize {
        self.readout
    }

    /// Conversion hyperparameters.
    pub fn config(&self) -> &SnnConfig {
        &self.config
    }

    /// Synaptic fan-out per input element of stage `i` (empty unless the
    /// stage is weighted).
    pub fn fanout(&self, i: usize) -> &[u32] {
        &self.fanout[i]
    }
}
