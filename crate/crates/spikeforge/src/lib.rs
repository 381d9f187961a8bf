//! File formats, parallel evaluation, reports and the command-line front end
//! around [`spikeforge_core`].

#![warn(missing_docs)]

pub mod bundle;
pub mod cli;
pub mod dataset;
#[allow(missing_docs)]
mod error;
pub mod pipeline;
pub mod report;

pub use bundle::{decode_bundle, encode_bundle, load_bundle, save_bundle};
pub use dataset::{load_calibration, load_dataset, save_dataset, Dataset};
pub use error::{IoError, Result};
pub use spikeforge_core as core;
