//! JSON and CSV outputs. Every file carries the tool version and the
//! configuration that produced it; CSV files in leading `#` lines.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use spikeforge_core::diagnostics::{DiagnosticsReport, EnergyCosts};
use spikeforge_core::NormalizationStats;

use crate::error::{IoError, Result};
use crate::pipeline::{Evaluation, Prediction, ResultRow};

/// Results table header.
pub const RESULT_COLUMNS: [&str; 10] = [
    "T",
    "gamma",
    "pooling",
    "p",
    "accuracy",
    "mean_rate_err",
    "sin_total",
    "pool_err_mean",
    "correct_ratio",
    "energy_ratio",
];

/// Name and version of this tool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ToolInfo {
    /// Crate name.
    pub name: &'static str,
    /// Crate version.
    pub version: &'static str,
}

/// This build.
pub const TOOL: ToolInfo = ToolInfo { name: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION") };

/// How the energy figures were computed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyModel {
    /// Per-operation costs.
    pub costs: EnergyCosts,
    /// Counting rule for the first weighted layer.
    pub analog_input_layer: &'static str,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            costs: EnergyCosts::default(),
            analog_input_layer: "layers fed by the analog input are charged their dense MACs on every time step",
        }
    }
}

/// Contents of `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport<'a, C: Serialize> {
    /// Producer.
    pub tool: ToolInfo,
    /// Configuration.
    pub config: &'a C,
    /// Activation scales.
    pub normalization: &'a NormalizationStats,
    /// Evaluated samples.
    pub samples: usize,
    /// ANN accuracy, when labels exist.
    pub ann_accuracy: Option<f64>,
    /// SNN accuracy, when labels exist.
    pub snn_accuracy: Option<f64>,
    /// SNN/ANN prediction agreement.
    pub agreement: f64,
    /// Conversion diagnostics.
    pub diagnostics: &'a DiagnosticsReport,
    /// Energy accounting.
    pub energy_model: EnergyModel,
}

impl<'a, C: Serialize> RunReport<'a, C> {
    /// Report for one evaluation.
    pub fn new(config: &'a C, normalization: &'a NormalizationStats, e: &'a Evaluation) -> Self {
        Self {
            tool: TOOL,
            config,
            normalization,
            samples: e.predictions.len(),
            ann_accuracy: e.ann_accuracy(),
            snn_accuracy: e.snn_accuracy(),
            agreement: e.agreement(),
            diagnostics: &e.diagnostics,
            energy_model: EnergyModel::default(),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// `# tool` and `# config` comment lines.
pub fn provenance<C: Serialize>(config: &C) -> String {
    let cfg = serde_json::to_string(config).expect("config serializes");
    format!("# {} {}\n# config {cfg}\n", TOOL.name, TOOL.version)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// The results table.
pub fn results_csv<C: Serialize>(config: &C, rows: &[ResultRow]) -> String {
    let mut s = provenance(config);
    s.push_str(&RESULT_COLUMNS.join(","));
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.horizon,
            r.gamma,
            r.pooling,
            r.p,
            opt(r.accuracy),
            r.mean_rate_err,
            r.sin_total,
            opt(r.pool_err_mean),
            opt(r.correct_ratio),
            r.energy_ratio
        );
    }
    s
}

/// One line per evaluated sample.
pub fn predictions_csv<C: Serialize>(config: &C, predictions: &[Prediction]) -> String {
    let mut s = provenance(config);
    s.push_str("sample,label,ann,snn\n");
    for p in predictions {
        let label = p.label.map(|l| l.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{label},{},{}", p.sample, p.ann, p.snn);
    }
    s
}

/// Per-layer diagnostics: spiking layers, then pooling layers.
pub fn layers_csv<C: Serialize>(config: &C, d: &DiagnosticsReport) -> String {
    let mut s = provenance(config);
    s.push_str(
        "layer,kind,neurons,rate_mean,rate_max,rate_min,rate_err_mean,rate_err_max,residual_mean,residual_abs_mean,\
         residual_min,residual_max,saturated_fraction,inactive_neurons,sin_spikes,pool_err_mean,pool_err_max,correct_ratio,correct_ratio_ann\n",
    );
    for l in &d.layers {
        let _ = writeln!(
            s,
            "{},spiking,{},{},{},{},{},{},{},{},{},{},{},{},{},,,,",
            l.layer,
            l.neurons,
            l.rate_mean,
            l.rate_max,
            l.rate_min,
            l.rate_error_mean,
            l.rate_error_max,
            l.residual_mean,
            l.residual_abs_mean,
            l.residual_min,
            l.residual_max,
            l.saturated_fraction,
            l.inactive_neurons,
            l.sin_spikes
        );
    }
    for p in &d.pools {
        let _ = writeln!(
            s,
            "{},pool-{},,,,,,,,,,,,,,{},{},{},{}",
            p.layer,
            p.mode,
            p.error_mean,
            p.error_max,
            opt(p.correct_ratio),
            opt(p.correct_ratio_ann)
        );
    }
    s
}

/// Writes `text` to `path`.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}
