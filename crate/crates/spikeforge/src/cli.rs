//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use spikeforge_core::{build_snn, fuse_batchnorm, AnnModel, PoolingMode};

use crate::bundle::{decode_bundle, encode_bundle, load_bundle, save_bundle};
use crate::dataset::{load_calibration, load_dataset, Dataset};
use crate::error::{IoError, Result};
use crate::pipeline::{self, convert_model, thread_pool, ResultRow, RunConfig, SweepAxes};
use crate::report::{self, write_text, RunReport, TOOL};

/// Converts ReLU networks to burst-spiking networks and measures the
/// conversion error.
#[derive(Debug, Parser)]
#[command(name = "spikeforge", version)]
pub struct Cli {
    /// Subcommand.
    #[command(subcommand)]
    pub command: Command,
}

/// Subcommands.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert, simulate and report on one configuration.
    Run(RunArgs),
    /// Evaluate the Cartesian product of comma-separated axis values.
    Sweep(SweepArgs),
    /// Fuse and normalize a model and write the converted bundle.
    Convert(ConvertArgs),
    /// Check a bundle's shapes and round trip, and optionally data sets.
    Validate(ValidateArgs),
}

fn parse_pooling(s: &str) -> std::result::Result<PoolingMode, String> {
    s.parse().map_err(|e: spikeforge_core::Error| e.to_string())
}

fn parse_p(s: &str) -> std::result::Result<f64, String> {
    let p: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if p > 0.0 && p <= 100.0 {
        Ok(p)
    } else {
        Err(format!("percentile must be in (0, 100], got {p}"))
    }
}

fn parse_vth(s: &str) -> std::result::Result<f32, String> {
    let v: f32 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("threshold must be positive, got {v}"))
    }
}

/// Inputs shared by every pipeline command.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Model bundle directory or model.json.
    #[arg(long)]
    pub model: PathBuf,
    /// Calibration descriptor or directory holding calib.json.
    #[arg(long)]
    pub calib: PathBuf,
    /// Evaluation descriptor or directory holding eval.json.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for evaluation subsampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluate at most this many samples.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Worker threads.
    #[arg(long, env = "SPIKEFORGE_WORKERS", value_parser = clap::value_parser!(u32).range(1..))]
    pub workers: Option<u32>,
}

/// `run` flags.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// Paths and execution settings.
    #[command(flatten)]
    pub data: DataArgs,
    /// Normalization percentile in (0, 100].
    #[arg(long, default_value = "99.9", value_parser = parse_p)]
    pub p: f64,
    /// Burst cap.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub gamma: u32,
    /// Simulation horizon.
    #[arg(long = "T", default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: u64,
    /// Max pooling conversion: avg, max-rate or lip.
    #[arg(long, default_value = "lip", value_parser = parse_pooling)]
    pub pooling: PoolingMode,
    /// Firing threshold.
    #[arg(long, default_value = "1.0", value_parser = parse_vth)]
    pub vth: f32,
}

/// `sweep` flags; axis flags take comma-separated lists.
#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Paths and execution settings.
    #[command(flatten)]
    pub data: DataArgs,
    /// Percentiles.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "99.9", value_parser = parse_p)]
    pub p: Vec<f64>,
    /// Burst caps.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "1", value_parser = clap::value_parser!(u32).range(1..))]
    pub gamma: Vec<u32>,
    /// Horizons.
    #[arg(long = "T", value_delimiter = ',', num_args = 1.., default_value = "64", value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: Vec<u64>,
    /// Pooling modes.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "lip", value_parser = parse_pooling)]
    pub pooling: Vec<PoolingMode>,
    /// Firing threshold.
    #[arg(long, default_value = "1.0", value_parser = parse_vth)]
    pub vth: f32,
}

/// `convert` flags.
#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Model bundle directory or model.json.
    #[arg(long)]
    pub model: PathBuf,
    /// Calibration descriptor or directory.
    #[arg(long)]
    pub calib: PathBuf,
    /// Normalization percentile in (0, 100].
    #[arg(long, default_value = "99.9", value_parser = parse_p)]
    pub p: f64,
    /// Output bundle directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads.
    #[arg(long, env = "SPIKEFORGE_WORKERS", value_parser = clap::value_parser!(u32).range(1..))]
    pub workers: Option<u32>,
}

/// `validate` flags.
#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Model bundle directory or model.json.
    #[arg(long)]
    pub model: PathBuf,
    /// Calibration set to check against the model input.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Evaluation set to check against the model input.
    #[arg(long)]
    pub eval: Option<PathBuf>,
}

impl RunArgs {
    /// The run configuration these flags describe.
    pub fn config(&self) -> RunConfig {
        RunConfig {
            model: self.data.model.clone(),
            calib: self.data.calib.clone(),
            eval: self.data.eval.clone(),
            p: self.p,
            gamma: self.gamma,
            horizon: self.horizon as usize,
            pooling: self.pooling,
            v_threshold: self.vth,
            seed: self.data.seed,
            limit: self.data.limit,
        }
    }
}

struct Inputs {
    model: AnnModel,
    calib: Dataset,
    eval: Dataset,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let model = load_bundle(&cfg.model)?;
    let shape = model.input_shape().to_vec();
    let calib = load_calibration(&cfg.calib, Some(&shape))?;
    let eval = match &cfg.eval {
        Some(path) => load_dataset(path, "eval.json", Some(&shape))?,
        None => calib.clone(),
    };
    Ok(Inputs { model, calib, eval })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.to_path_buf(), source })
}

fn workers(w: Option<u32>) -> Option<usize> {
    w.map(|w| w as usize)
}

/// `run`: writes `report.json`, `results.csv`, `predictions.csv`,
/// `layers.csv` and the converted bundle under `converted/`.
pub fn cmd_run(args: &RunArgs) -> Result<RunConfig> {
    let cfg = args.config();
    let pool = thread_pool(workers(args.data.workers))?;
    let inputs = load_inputs(&cfg)?;
    let outcome = pipeline::run(&cfg, &inputs.model, &inputs.calib, &inputs.eval, &pool)?;
    let out = &args.data.out;
    create_dir(out)?;
    save_bundle(&outcome.converted.normalized, &out.join("converted"))?;
    let e = &outcome.evaluation;
    let row = ResultRow::new(cfg.horizon, cfg.gamma, cfg.pooling, cfg.p, e);
    write_text(&out.join("report.json"), &report::to_json(&RunReport::new(&cfg, &outcome.converted.stats, e)))?;
    write_text(&out.join("results.csv"), &report::results_csv(&cfg, &[row]))?;
    write_text(&out.join("predictions.csv"), &report::predictions_csv(&cfg, &e.predictions))?;
    write_text(&out.join("layers.csv"), &report::layers_csv(&cfg, &e.diagnostics))?;
    Ok(cfg)
}

#[derive(Serialize)]
struct SweepConfig<'a> {
    #[serde(flatten)]
    base: &'a RunConfig,
    axes: &'a SweepAxes,
}

#[derive(Serialize)]
struct SweepReport<'a> {
    tool: report::ToolInfo,
    config: &'a SweepConfig<'a>,
    rows: &'a [ResultRow],
}

/// `sweep`: writes `results.csv` and `sweep.json`.
pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<ResultRow>> {
    let axes = SweepAxes {
        horizon: args.horizon.iter().map(|&t| t as usize).collect(),
        gamma: args.gamma.clone(),
        pooling: args.pooling.clone(),
        p: args.p.clone(),
    };
    if axes.horizon.is_empty() || axes.gamma.is_empty() || axes.pooling.is_empty() || axes.p.is_empty() {
        return Err(IoError::Config("sweep axes must be nonempty".into()));
    }
    let base = RunConfig {
        model: args.data.model.clone(),
        calib: args.data.calib.clone(),
        eval: args.data.eval.clone(),
        p: axes.p[0],
        gamma: axes.gamma[0],
        horizon: axes.horizon[0],
        pooling: axes.pooling[0],
        v_threshold: args.vth,
        seed: args.data.seed,
        limit: args.data.limit,
    };
    let pool = thread_pool(workers(args.data.workers))?;
    let inputs = load_inputs(&base)?;
    let rows = pipeline::sweep(&base, &axes, &inputs.model, &inputs.calib, &inputs.eval, &pool)?;
    let out = &args.data.out;
    create_dir(out)?;
    let config = SweepConfig { base: &base, axes: &axes };
    write_text(&out.join("results.csv"), &report::results_csv(&config, &rows))?;
    let sweep = SweepReport { tool: TOOL, config: &config, rows: &rows };
    write_text(&out.join("sweep.json"), &report::to_json(&sweep))?;
    Ok(rows)
}

#[derive(Serialize)]
struct ConvertReport<'a> {
    tool: report::ToolInfo,
    model: &'a Path,
    calib: &'a Path,
    normalization: &'a spikeforge_core::NormalizationStats,
}

/// `convert`: writes the normalized bundle plus `normalization.json` to
/// `out`.
pub fn cmd_convert(args: &ConvertArgs) -> Result<()> {
    let model = load_bundle(&args.model)?;
    let calib = load_calibration(&args.calib, Some(model.input_shape()))?;
    let pool = thread_pool(workers(args.workers))?;
    let converted = convert_model(&model, &calib, args.p, &pool)?;
    save_bundle(&converted.normalized, &args.out)?;
    for w in &converted.stats.warnings {
        eprintln!("warning: {w}");
    }
    let rep = ConvertReport { tool: TOOL, model: &args.model, calib: &args.calib, normalization: &converted.stats };
    write_text(&args.out.join("normalization.json"), &report::to_json(&rep))
}

/// `validate`: returns a human-readable summary.
pub fn cmd_validate(args: &ValidateArgs) -> Result<String> {
    let model = load_bundle(&args.model)?;
    let mut lines = vec![format!("input {:?}", model.input_shape())];
    for (i, (layer, shape)) in model.layers().iter().zip(model.shapes()).enumerate() {
        lines.push(format!("{i:>3} {:<12} -> {shape:?}", layer.kind().as_str()));
    }
    lines.push(format!("MACs per inference: {}", model.mac_count()));

    let (manifest, blob) = encode_bundle(&model);
    if !decode_bundle(manifest.as_bytes(), &blob)?.bit_eq(&model) {
        return Err(IoError::Config("bundle round trip is not bit-exact".into()));
    }
    lines.push("round trip: bit-exact".into());

    let fused = fuse_batchnorm(&model)?;
    build_snn(&fused, Default::default())?;
    lines.push("spiking conversion: ok".into());

    for (name, path, default) in [("calib", &args.calib, "calib.json"), ("eval", &args.eval, "eval.json")] {
        if let Some(path) = path {
            let d = load_dataset(path, default, Some(model.input_shape()))?;
            let labels = if d.labels.is_some() { "labelled" } else { "unlabelled" };
            lines.push(format!("{name}: {} samples of {:?}, {labels}", d.len(), d.shape));
        }
    }
    Ok(lines.join("\n"))
}

/// Dispatches a parsed command line.
pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(a) => cmd_run(a).map(drop),
        Command::Sweep(a) => cmd_sweep(a).map(drop),
        Command::Convert(a) => cmd_convert(a),
        Command::Validate(a) => cmd_validate(a).map(|s| println!("{s}")),
    }
}
