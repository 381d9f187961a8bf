//! Conversion and evaluation driven by a [`RunConfig`].

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::Serialize;
use spikeforge_core::diagnostics::{reference_activations, Diagnostics, DiagnosticsReport};
use spikeforge_core::{
    build_snn, decode, forward_ann, fuse_batchnorm, normalize_weights, simulate_with, AnnModel, NormalizationStats,
    PoolingMode, SimOptions, SnnConfig, SnnNetwork, StatsCollector, Tensor,
};

use crate::dataset::Dataset;
use crate::error::{IoError, Result};

const CALIB_CHUNK: usize = 8;

/// Everything that determines a run's results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// Bundle directory or manifest.
    pub model: PathBuf,
    /// Calibration set.
    pub calib: PathBuf,
    /// Evaluation set; the calibration set when absent.
    pub eval: Option<PathBuf>,
    /// Normalization percentile.
    pub p: f64,
    /// Burst cap Γ.
    pub gamma: u32,
    /// Simulation horizon T.
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Max pooling conversion.
    pub pooling: PoolingMode,
    /// Firing threshold.
    pub v_threshold: f32,
    /// Seed for evaluation subsampling.
    pub seed: u64,
    /// Evaluate at most this many samples.
    pub limit: Option<usize>,
}

impl RunConfig {
    /// Network settings for a given input scale.
    pub fn snn_config(&self, input_scale: f32) -> SnnConfig {
        SnnConfig {
            gamma_cap: self.gamma,
            pooling: self.pooling,
            v_threshold: self.v_threshold,
            input_scale,
            horizon: self.horizon,
        }
    }
}

/// Thread pool with `workers` threads, or rayon's default when `None`.
pub fn thread_pool(workers: Option<usize>) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| IoError::Config(format!("cannot start worker pool: {e}")))
}

/// A fused model, its activation scales and the normalized model.
#[derive(Debug, Clone)]
pub struct Converted {
    /// BatchNorm folded into the preceding convolutions.
    pub fused: AnnModel,
    /// Scales measured on the calibration set.
    pub stats: NormalizationStats,
    /// Weights divided through by the scales.
    pub normalized: AnnModel,
}

/// Fuses, calibrates and normalizes `model`. Calibration shards run on
/// `pool`; the scales do not depend on the shard layout.
pub fn convert_model(model: &AnnModel, calib: &Dataset, p: f64, pool: &ThreadPool) -> Result<Converted> {
    let fused = fuse_batchnorm(model)?;
    let shards: Vec<StatsCollector> = pool.install(|| {
        calib
            .samples
            .par_chunks(CALIB_CHUNK)
            .map(|chunk| {
                let mut c = StatsCollector::new(&fused, p)?;
                for s in chunk {
                    c.observe(&fused, s)?;
                }
                Ok(c)
            })
            .collect::<Result<_>>()
    })?;
    let mut shards = shards.into_iter();
    let mut collector = shards.next().map_or_else(|| StatsCollector::new(&fused, p), Ok)?;
    for s in shards {
        collector.merge(s);
    }
    let stats = collector.finish()?;
    let normalized = normalize_weights(&fused, &stats)?;
    Ok(Converted { fused, stats, normalized })
}

/// Indices of the evaluated samples: all of them, or `limit` drawn with
/// `seed` and kept in file order.
pub fn select_samples(count: usize, limit: Option<usize>, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..count).collect();
    if let Some(limit) = limit.filter(|&l| l < count) {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(limit);
        idx.sort_unstable();
    }
    idx
}

/// Per-sample predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    /// Index into the evaluation set.
    pub sample: usize,
    /// Ground truth, if known.
    pub label: Option<u32>,
    /// ANN argmax.
    pub ann: usize,
    /// SNN argmax.
    pub snn: usize,
}

/// Outcome of evaluating one network on a data set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// One entry per evaluated sample.
    pub predictions: Vec<Prediction>,
    /// Aggregated diagnostics.
    pub diagnostics: DiagnosticsReport,
}

fn fraction(hits: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| hits as f64 / n as f64)
}

impl Evaluation {
    /// ANN accuracy against labels.
    pub fn ann_accuracy(&self) -> Option<f64> {
        self.accuracy(|p| p.ann)
    }

    /// SNN accuracy against labels.
    pub fn snn_accuracy(&self) -> Option<f64> {
        self.accuracy(|p| p.snn)
    }

    /// Fraction of samples where the SNN agrees with the ANN.
    pub fn agreement(&self) -> f64 {
        fraction(self.predictions.iter().filter(|p| p.ann == p.snn).count(), self.predictions.len()).unwrap_or(0.0)
    }

    fn accuracy(&self, pick: impl Fn(&Prediction) -> usize) -> Option<f64> {
        let labelled: Vec<_> = self.predictions.iter().filter_map(|p| p.label.map(|l| (l, pick(p)))).collect();
        if labelled.len() != self.predictions.len() {
            return None;
        }
        fraction(labelled.iter().filter(|(l, y)| *l as usize == *y).count(), labelled.len())
    }
}

fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Simulates `net` on the selected samples of `data` and aggregates
/// diagnostics. Samples run in parallel on `pool` and are merged in index
/// order, so results do not depend on the worker count.
pub fn evaluate(
    converted: &Converted,
    net: &SnnNetwork,
    data: &Dataset,
    indices: &[usize],
    pool: &ThreadPool,
) -> Result<Evaluation> {
    let horizon = net.config().horizon;
    let scale = net.config().input_scale;
    let per_sample: Vec<(Prediction, Diagnostics)> = pool.install(|| {
        indices
            .par_iter()
            .map(|&i| {
                let x: &Tensor = &data.samples[i];
                let ann_out = forward_ann(&converted.fused, x)?;
                let ann = argmax(ann_out.last().map_or(&[][..], Tensor::data));
                let trace = simulate_with(net, x, horizon, SimOptions::default())?;
                let reference = reference_activations(&converted.normalized, x, scale)?;
                let mut diag = Diagnostics::new();
                diag.add_sample(&converted.normalized, net, &trace, &reference)?;
                let label = data.labels.as_ref().map(|l| l[i]);
                Ok((Prediction { sample: i, label, ann, snn: decode(&trace).prediction }, diag))
            })
            .collect::<Result<_>>()
    })?;
    let mut diagnostics = Diagnostics::new();
    let mut predictions = Vec::with_capacity(per_sample.len());
    for (p, d) in per_sample {
        diagnostics.merge(d)?;
        predictions.push(p);
    }
    Ok(Evaluation { predictions, diagnostics: diagnostics.report() })
}

/// Fully evaluated run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Conversion products.
    pub converted: Converted,
    /// Evaluation results.
    pub evaluation: Evaluation,
}

/// Converts `model`, builds the network and evaluates it.
pub fn run(
    cfg: &RunConfig,
    model: &AnnModel,
    calib: &Dataset,
    eval: &Dataset,
    pool: &ThreadPool,
) -> Result<RunOutcome> {
    let converted = convert_model(model, calib, cfg.p, pool)?;
    let net = build_snn(&converted.normalized, cfg.snn_config(converted.stats.lambda_input))?;
    let indices = select_samples(eval.len(), cfg.limit, cfg.seed);
    let evaluation = evaluate(&converted, &net, eval, &indices, pool)?;
    Ok(RunOutcome { converted, evaluation })
}

/// Values swept by `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepAxes {
    /// Horizons.
    #[serde(rename = "T")]
    pub horizon: Vec<usize>,
    /// Burst caps.
    pub gamma: Vec<u32>,
    /// Pooling modes.
    pub pooling: Vec<PoolingMode>,
    /// Percentiles.
    pub p: Vec<f64>,
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    /// Horizon.
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Burst cap.
    pub gamma: u32,
    /// Pooling mode.
    pub pooling: PoolingMode,
    /// Percentile.
    pub p: f64,
    /// SNN accuracy, when labels exist.
    pub accuracy: Option<f64>,
    /// Mean |rate - activation|.
    pub mean_rate_err: f64,
    /// Spikes of inactivated neurons.
    pub sin_total: u64,
    /// Mean pooling error, when the model has converted max pooling.
    pub pool_err_mean: Option<f64>,
    /// Pooling correct ratio.
    pub correct_ratio: Option<f64>,
    /// SNN / ANN energy.
    pub energy_ratio: f64,
}

impl ResultRow {
    /// Row for one evaluation.
    pub fn new(horizon: usize, gamma: u32, pooling: PoolingMode, p: f64, e: &Evaluation) -> Self {
        let d = &e.diagnostics;
        Self {
            horizon,
            gamma,
            pooling,
            p,
            accuracy: e.snn_accuracy(),
            mean_rate_err: d.mean_rate_error,
            sin_total: d.sin_total,
            pool_err_mean: d.pool_error_mean,
            correct_ratio: d.correct_ratio,
            energy_ratio: d.energy.ratio,
        }
    }
}

/// Evaluates every combination of `axes`. Rows are ordered by `p`, then
/// pooling, then Γ, then T, each in the order given.
pub fn sweep(
    base: &RunConfig,
    axes: &SweepAxes,
    model: &AnnModel,
    calib: &Dataset,
    eval: &Dataset,
    pool: &ThreadPool,
) -> Result<Vec<ResultRow>> {
    let indices = select_samples(eval.len(), base.limit, base.seed);
    let mut rows = Vec::new();
    for &p in &axes.p {
        let converted = convert_model(model, calib, p, pool)?;
        for &pooling in &axes.pooling {
            for &gamma in &axes.gamma {
                for &horizon in &axes.horizon {
                    let cfg = RunConfig { p, pooling, gamma, horizon, ..base.clone() };
                    let net = build_snn(&converted.normalized, cfg.snn_config(converted.stats.lambda_input))?;
                    let e = evaluate(&converted, &net, eval, &indices, pool)?;
                    rows.push(ResultRow::new(horizon, gamma, pooling, p, &e));
                }
            }
        }
    }
    Ok(rows)
}
