//! Clock-driven spiking simulation and ANN-to-SNN conversion.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. A trained
//! feed-forward [`AnnModel`] is evaluated exactly by [`forward_ann`], which is
//! the reference every spiking result is measured against. Conversion goes
//! through [`fuse_batchnorm`], [`collect_activation_stats`],
//! [`normalize_weights`] and [`build_snn`]; the resulting [`SnnNetwork`] is
//! run by [`simulate`] and read out by [`decode`]. The [`diagnostics`] module
//! measures residual membrane potential, spikes of inactivated neurons,
//! pooling error and the MAC/AC energy estimate from a [`SimTrace`].
//!
//! Neurons are integrate-and-fire units with soft reset that may emit up to
//! `gamma_cap` spikes per step (burst spikes). Max pooling layers become one
//! of three spiking stages selected by [`PoolingMode`].

#![no_std]
#![warn(missing_docs)]

extern crate alloc;

pub mod convert;
pub mod diagnostics;
mod error;
mod kernels;
pub mod model;
pub mod network;
pub mod neuron;
pub mod pooling;
pub mod sim;
mod tensor;

pub use crate::{
    convert::{
        activation_sites, build_snn, collect_activation_stats, fuse_batchnorm, normalize_weights, percentile,
        NormalizationStats, StatsCollector, DEFAULT_PERCENTILE, MIN_SCALE,
    },
    error::{Error, Result},
    model::{forward_ann, validate_shapes, AnnModel, BatchNorm2d, Conv2d, Layer, LayerKind, Linear, Pool2d},
    network::{PoolingMode, SnnConfig, SnnNetwork, Stage, StageKind},
    neuron::{step_if, step_if_burst, NeuronState},
    pooling::{pool_average, LateralInhibitionPool, LiPool, MaxRatePool},
    sim::{decode, simulate, simulate_with, Decoded, SimOptions, SimTrace, StageRecord, StageTrace},
    tensor::Tensor,
};
