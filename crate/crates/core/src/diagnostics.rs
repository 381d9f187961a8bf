//! Conversion-error diagnostics and energy estimate.
//!
//! Every function compares a [`SimTrace`] against reference activations of
//! the normalized ANN on the same sample (see [`reference_activations`]).
//! Per-sample results can be accumulated across a data set with
//! [`Diagnostics`], whose [`merge`](Diagnostics::merge) is associative.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::PoolGeom;
use crate::model::{forward_ann, AnnModel};
use crate::network::{PoolingMode, SnnNetwork, Stage};
use crate::sim::{SimTrace, StageRecord};
use crate::tensor::Tensor;

/// Per-operation energy costs. Only their ratio matters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EnergyCosts {
    /// Cost of one 32-bit multiply-accumulate.
    pub mac: f64,
    /// Cost of one accumulate.
    pub ac: f64,
}

impl Default for EnergyCosts {
    fn default() -> Self {
        Self { mac: 4.6, ac: 0.9 }
    }
}

/// ANN and SNN energy for the same workload.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EnergyEstimate {
    /// `ann_macs * mac`.
    pub ann: f64,
    /// `synaptic_ops * ac + dense_macs * mac`.
    pub snn: f64,
    /// `snn / ann`.
    pub ratio: f64,
}

impl EnergyEstimate {
    /// Estimate from raw operation counts.
    pub fn from_counts(ann_macs: u64, synaptic_ops: u64, dense_macs: u64, costs: EnergyCosts) -> Self {
        let ann = ann_macs as f64 * costs.mac;
        let snn = synaptic_ops as f64 * costs.ac + dense_macs as f64 * costs.mac;
        Self { ann, snn, ratio: if ann > 0.0 { snn / ann } else { 0.0 } }
    }
}

/// Energy of one inference: the ANN pays a MAC per synapse, the SNN pays an
/// AC per delivered spike per synapse plus MACs for every step of the analog
/// input layer.
pub fn energy_estimate(model: &AnnModel, trace: &SimTrace) -> EnergyEstimate {
    let (ac, mac) = trace.op_counts();
    EnergyEstimate::from_counts(model.mac_count(), ac, mac, EnergyCosts::default())
}

/// Activations of the normalized model on `input / input_scale`, i.e. the
/// values the spiking rates should approximate.
pub fn reference_activations(model: &AnnModel, input: &Tensor, input_scale: f32) -> Result<Vec<Tensor>> {
    let scaled = input.map(|x| (f64::from(x) / f64::from(input_scale)) as f32)?;
    forward_ann(model, &scaled)
}

fn check_alignment(trace: &SimTrace, reference: &[Tensor]) -> Result<()> {
    if trace.stages.len() != reference.len() {
        return Err(Error::TraceMismatch(format!(
            "{} stages vs {} reference layers",
            trace.stages.len(),
            reference.len()
        )));
    }
    for (i, (stage, r)) in trace.stages.iter().zip(reference).enumerate() {
        if stage.shape != r.shape() {
            return Err(Error::TraceMismatch(format!(
                "layer {i}: trace shape {:?} vs reference {:?}",
                stage.shape,
                r.shape()
            )));
        }
    }
    Ok(())
}

struct SpikingView<'a> {
    layer: usize,
    spikes: &'a [u32],
    membrane: &'a [f64],
    current_sum: &'a [f64],
    reference: &'a [f32],
}

fn spiking_layers<'a>(trace: &'a SimTrace, reference: &'a [Tensor]) -> Result<Vec<SpikingView<'a>>> {
    check_alignment(trace, reference)?;
    Ok(trace
        .stages
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match &s.record {
            StageRecord::Spiking { spikes, membrane, current_sum, .. } => {
                Some(SpikingView { layer: i, spikes, membrane, current_sum, reference: reference[i].data() })
            }
            _ => None,
        })
        .collect())
}

/// Residual membrane potential of one spiking layer.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LayerResidual {
    /// Layer index.
    pub layer: usize,
    /// Neurons in the layer.
    pub neurons: usize,
    /// Mean of V(T).
    pub mean: f64,
    /// Mean of |V(T)|.
    pub mean_abs: f64,
    /// Largest V(T).
    pub max: f64,
    /// Smallest V(T).
    pub min: f64,
    /// Neurons whose reference activation exceeds `gamma * v_th`, i.e. that
    /// cannot be expressed at the capped rate.
    pub saturated: usize,
    /// Largest `|spikes * v_th + V(T) - sum_t I(t)|` over the layer.
    pub conservation_error: f64,
}

impl LayerResidual {
    /// Fraction of neurons in the saturated set.
    pub fn saturated_fraction(&self) -> f64 {
        self.saturated as f64 / self.neurons.max(1) as f64
    }
}

/// Residual potential per spiking layer.
pub fn residual_report(trace: &SimTrace, reference: &[Tensor]) -> Result<Vec<LayerResidual>> {
    let v_th = f64::from(trace.v_threshold);
    let cap = f64::from(trace.gamma_cap) * v_th;
    Ok(spiking_layers(trace, reference)?
        .into_iter()
        .map(|l| {
            let n = l.membrane.len();
            let mut r = LayerResidual {
                layer: l.layer,
                neurons: n,
                mean: 0.0,
                mean_abs: 0.0,
                max: f64::NEG_INFINITY,
                min: f64::INFINITY,
                saturated: l.reference.iter().filter(|&&a| f64::from(a) > cap).count(),
                conservation_error: 0.0,
            };
            for ((&v, &s), &i) in l.membrane.iter().zip(l.spikes).zip(l.current_sum) {
                r.mean += v;
                r.mean_abs += v.abs();
                r.max = r.max.max(v);
                r.min = r.min.min(v);
                r.conservation_error = r.conservation_error.max((f64::from(s) * v_th + v - i).abs());
            }
            r.mean /= n.max(1) as f64;
            r.mean_abs /= n.max(1) as f64;
            r
        })
        .collect())
}

/// Spikes of inactivated neurons in one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LayerSin {
    /// Layer index.
    pub layer: usize,
    /// Neurons whose reference activation is zero (or below).
    pub inactive: usize,
    /// Spikes those neurons emitted (M).
    pub spikes: u64,
}

/// M per spiking layer: spikes emitted by neurons whose reference activation
/// is not positive.
pub fn sin_count(trace: &SimTrace, reference: &[Tensor]) -> Result<Vec<LayerSin>> {
    Ok(spiking_layers(trace, reference)?
        .into_iter()
        .map(|l| {
            let mut sin = LayerSin { layer: l.layer, inactive: 0, spikes: 0 };
            for (&a, &s) in l.reference.iter().zip(l.spikes) {
                if a <= 0.0 {
                    sin.inactive += 1;
                    sin.spikes += u64::from(s);
                }
            }
            sin
        })
        .collect())
}

/// Firing-rate summary of one spiking layer.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LayerRates {
    /// Layer index.
    pub layer: usize,
    /// Mean rate over neurons.
    pub mean: f64,
    /// Highest neuron rate.
    pub max: f64,
    /// Lowest neuron rate.
    pub min: f64,
}

/// Mean, max and min spikes-per-step over each spiking layer's neurons.
/// Burst counts are included, so rates may exceed 1.
pub fn firing_stats(trace: &SimTrace) -> Vec<LayerRates> {
    let t = trace.horizon as f64;
    trace
        .stages
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match &s.record {
            StageRecord::Spiking { spikes, .. } => {
                let (sum, max, min) = spikes
                    .iter()
                    .fold((0u64, 0u32, u32::MAX), |(s, mx, mn), &c| (s + u64::from(c), mx.max(c), mn.min(c)));
                let n = spikes.len().max(1) as f64;
                Some(LayerRates {
                    layer: i,
                    mean: sum as f64 / n / t,
                    max: f64::from(max) / t,
                    min: f64::from(min.min(max)) / t,
                })
            }
            _ => None,
        })
        .collect()
}

/// Rate-versus-activation error of one spiking layer.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LayerRateError {
    /// Layer index.
    pub layer: usize,
    /// Mean `|rate - activation|` over neurons.
    pub mean_abs: f64,
    /// Largest `|rate - activation|`.
    pub max_abs: f64,
}

/// `|spikes / T - a|` per spiking layer, `a` being the reference activation.
pub fn rate_error(trace: &SimTrace, reference: &[Tensor]) -> Result<Vec<LayerRateError>> {
    let t = trace.horizon as f64;
    Ok(spiking_layers(trace, reference)?
        .into_iter()
        .map(|l| {
            let mut e = LayerRateError { layer: l.layer, mean_abs: 0.0, max_abs: 0.0 };
            for (&s, &a) in l.spikes.iter().zip(l.reference) {
                let d = (f64::from(s) / t - f64::from(a)).abs();
                e.mean_abs += d;
                e.max_abs = e.max_abs.max(d);
            }
            e.mean_abs /= l.spikes.len().max(1) as f64;
            e
        })
        .collect())
}

/// Error of one converted max pooling layer against max pooling of its
/// input rates.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PoolError {
    /// Layer index.
    pub layer: usize,
    /// Pooling mode of the stage.
    pub mode: PoolingMode,
    /// Output positions.
    pub positions: usize,
    /// Mean `|r_out - max(r_in)|`.
    pub mean_abs: f64,
    /// Largest `|r_out - max(r_in)|`.
    pub max_abs: f64,
    /// Allowable error `e` used for the correct counts.
    pub tolerance: f64,
    /// Positions whose pooled input rate is positive.
    pub positive: usize,
    /// Of those, positions with error below `tolerance`.
    pub correct: usize,
    /// Positions whose reference (ANN) pooled activation is positive.
    pub positive_ann: usize,
    /// Of those, positions with error below `tolerance`.
    pub correct_ann: usize,
}

impl PoolError {
    /// `correct / positive`, over positions with a positive pooled input rate.
    pub fn correct_ratio(&self) -> Option<f64> {
        (self.positive > 0).then(|| self.correct as f64 / self.positive as f64)
    }

    /// `correct_ann / positive_ann`, over positions with a positive ANN
    /// activation.
    pub fn correct_ratio_ann(&self) -> Option<f64> {
        (self.positive_ann > 0).then(|| self.correct_ann as f64 / self.positive_ann as f64)
    }
}

/// Default allowable pooling error, `2 / T`.
pub fn default_tolerance(horizon: usize) -> f64 {
    2.0 / horizon as f64
}

/// Error of every converted max pooling stage. Networks without one yield an
/// empty list.
pub fn pooling_error(
    net: &SnnNetwork,
    trace: &SimTrace,
    reference: &[Tensor],
    tolerance: Option<f64>,
) -> Result<Vec<PoolError>> {
    check_alignment(trace, reference)?;
    if trace.stages.len() != net.stages().len() {
        return Err(Error::TraceMismatch("trace was produced by a different network".into()));
    }
    let t = trace.horizon as f64;
    let e = tolerance.unwrap_or_else(|| default_tolerance(trace.horizon));
    let mut window = Vec::new();
    let mut out = Vec::new();
    for (i, stage) in net.stages().iter().enumerate() {
        let Stage::MaxPool { pool, .. } = stage else { continue };
        let StageRecord::Pool { mode, input_sum, output_sum, .. } = &trace.stages[i].record else {
            // Stages past the readout are never simulated.
            continue;
        };
        let geom = PoolGeom::new(net.stage_input_shape(i), pool.kernel, pool.stride).expect("validated geometry");
        let mut p = PoolError {
            layer: i,
            mode: *mode,
            positions: output_sum.len(),
            mean_abs: 0.0,
            max_abs: 0.0,
            tolerance: e,
            positive: 0,
            correct: 0,
            positive_ann: 0,
            correct_ann: 0,
        };
        for (o, &sum) in output_sum.iter().enumerate() {
            geom.window(o, &mut window);
            let truth = window.iter().map(|&j| input_sum[j] / t).fold(f64::NEG_INFINITY, f64::max);
            let err = (sum / t - truth).abs();
            p.mean_abs += err;
            p.max_abs = p.max_abs.max(err);
            let ok = err < e;
            if truth > 0.0 {
                p.positive += 1;
                p.correct += usize::from(ok);
            }
            if reference[i].data()[o] > 0.0 {
                p.positive_ann += 1;
                p.correct_ann += usize::from(ok);
            }
        }
        p.mean_abs /= p.positions.max(1) as f64;
        out.push(p);
    }
    Ok(out)
}

/// Data-set level accumulation of one spiking layer.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LayerReport {
    /// Layer index.
    pub layer: usize,
    /// Neurons per sample.
    pub neurons: usize,
    /// Mean V(T) over neurons and samples.
    pub residual_mean: f64,
    /// Mean |V(T)|.
    pub residual_abs_mean: f64,
    /// Largest V(T).
    pub residual_max: f64,
    /// Smallest V(T).
    pub residual_min: f64,
    /// Fraction of neurons whose activation is within the capped rate (ℝ₁).
    pub unsaturated_fraction: f64,
    /// Fraction above `gamma * v_th` (ℝ₂).
    pub saturated_fraction: f64,
    /// Spikes of inactivated neurons, summed over samples.
    pub sin_spikes: u64,
    /// Inactive neurons, summed over samples.
    pub inactive_neurons: u64,
    /// Mean firing rate.
    pub rate_mean: f64,
    /// Highest neuron rate seen.
    pub rate_max: f64,
    /// Lowest neuron rate seen.
    pub rate_min: f64,
    /// Mean |rate - activation|.
    pub rate_error_mean: f64,
    /// Largest |rate - activation|.
    pub rate_error_max: f64,
    /// Largest conservation residual seen.
    pub conservation_error: f64,
}

/// Data-set level accumulation of one pooling layer.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PoolReport {
    /// Layer index.
    pub layer: usize,
    /// Pooling mode.
    pub mode: PoolingMode,
    /// Mean |r_out - max(r_in)| over positions and samples.
    pub error_mean: f64,
    /// Largest error.
    pub error_max: f64,
    /// Allowable error used.
    pub tolerance: f64,
    /// Correct ratio over positive pooled input rates.
    pub correct_ratio: Option<f64>,
    /// Correct ratio over positive ANN activations.
    pub correct_ratio_ann: Option<f64>,
}

/// Summary over all accumulated samples.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DiagnosticsReport {
    /// Samples accumulated.
    pub samples: usize,
    /// Simulation horizon.
    pub horizon: usize,
    /// Per spiking layer.
    pub layers: Vec<LayerReport>,
    /// Per converted max pooling layer.
    pub pools: Vec<PoolReport>,
    /// Total spikes of inactivated neurons.
    pub sin_total: u64,
    /// Mean |rate - activation| over every spiking neuron and sample.
    pub mean_rate_error: f64,
    /// Mean pooling error over every pooling position and sample, if any.
    pub pool_error_mean: Option<f64>,
    /// Pooled correct ratio over all pooling layers, if any.
    pub correct_ratio: Option<f64>,
    /// Pooled ANN-positive correct ratio over all pooling layers, if any.
    pub correct_ratio_ann: Option<f64>,
    /// Energy summed over samples.
    pub energy: EnergyEstimate,
}

#[derive(Debug, Clone, PartialEq)]
struct LayerAcc {
    layer: usize,
    neurons: usize,
    count: u64,
    residual_sum: f64,
    residual_abs_sum: f64,
    residual_max: f64,
    residual_min: f64,
    saturated: u64,
    sin_spikes: u64,
    inactive: u64,
    rate_sum: f64,
    rate_max: f64,
    rate_min: f64,
    rate_err_sum: f64,
    rate_err_max: f64,
    conservation: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct PoolAcc {
    layer: usize,
    mode: PoolingMode,
    tolerance: f64,
    positions: u64,
    err_sum: f64,
    err_max: f64,
    positive: u64,
    correct: u64,
    positive_ann: u64,
    correct_ann: u64,
}

/// Accumulator of per-sample diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    samples: usize,
    horizon: usize,
    layers: Vec<LayerAcc>,
    pools: Vec<PoolAcc>,
    ann_energy: f64,
    snn_energy: f64,
}

impl Diagnostics {
    /// Empty accumulator.
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one sample. `model` is the normalized ANN the network was built
    /// from and `reference` its activations on the scaled sample.
    pub fn add_sample(
        &mut self,
        model: &AnnModel,
        net: &SnnNetwork,
        trace: &SimTrace,
        reference: &[Tensor],
    ) -> Result<()> {
        let residual = residual_report(trace, reference)?;
        let sin = sin_count(trace, reference)?;
        let rates = firing_stats(trace);
        let errors = rate_error(trace, reference)?;
        let pools = pooling_error(net, trace, reference, None)?;
        let energy = energy_estimate(model, trace);

        let layers = residual
            .iter()
            .zip(&sin)
            .zip(&rates)
            .zip(&errors)
            .map(|(((r, s), f), e)| LayerAcc {
                layer: r.layer,
                neurons: r.neurons,
                count: r.neurons as u64,
                residual_sum: r.mean * r.neurons as f64,
                residual_abs_sum: r.mean_abs * r.neurons as f64,
                residual_max: r.max,
                residual_min: r.min,
                saturated: r.saturated as u64,
                sin_spikes: s.spikes,
                inactive: s.inactive as u64,
                rate_sum: f.mean * r.neurons as f64,
                rate_max: f.max,
                rate_min: f.min,
                rate_err_sum: e.mean_abs * r.neurons as f64,
                rate_err_max: e.max_abs,
                conservation: r.conservation_error,
            })
            .collect();
        let pools = pools
            .iter()
            .map(|p| PoolAcc {
                layer: p.layer,
                mode: p.mode,
                tolerance: p.tolerance,
                positions: p.positions as u64,
                err_sum: p.mean_abs * p.positions as f64,
                err_max: p.max_abs,
                positive: p.positive as u64,
                correct: p.correct as u64,
                positive_ann: p.positive_ann as u64,
                correct_ann: p.correct_ann as u64,
            })
            .collect();
        self.merge(Diagnostics {
            samples: 1,
            horizon: trace.horizon,
            layers,
            pools,
            ann_energy: energy.ann,
            snn_energy: energy.snn,
        })
    }

    /// Combines two accumulators over the same network and horizon.
    pub fn merge(&mut self, other: Diagnostics) -> Result<()> {
        if other.samples == 0 {
            return Ok(());
        }
        if self.samples == 0 {
            *self = other;
            return Ok(());
        }
        if self.horizon != other.horizon
            || self.layers.len() != other.layers.len()
            || self.pools.len() != other.pools.len()
        {
            return Err(Error::TraceMismatch("accumulators describe different runs".into()));
        }
        self.samples += other.samples;
        self.ann_energy += other.ann_energy;
        self.snn_energy += other.snn_energy;
        for (a, b) in self.layers.iter_mut().zip(other.layers) {
            a.count += b.count;
            a.residual_sum += b.residual_sum;
            a.residual_abs_sum += b.residual_abs_sum;
            a.residual_max = a.residual_max.max(b.residual_max);
            a.residual_min = a.residual_min.min(b.residual_min);
            a.saturated += b.saturated;
            a.sin_spikes += b.sin_spikes;
            a.inactive += b.inactive;
            a.rate_sum += b.rate_sum;
            a.rate_max = a.rate_max.max(b.rate_max);
            a.rate_min = a.rate_min.min(b.rate_min);
            a.rate_err_sum += b.rate_err_sum;
            a.rate_err_max = a.rate_err_max.max(b.rate_err_max);
            a.conservation = a.conservation.max(b.conservation);
        }
        for (a, b) in self.pools.iter_mut().zip(other.pools) {
            a.positions += b.positions;
            a.err_sum += b.err_sum;
            a.err_max = a.err_max.max(b.err_max);
            a.positive += b.positive;
            a.correct += b.correct;
            a.positive_ann += b.positive_ann;
            a.correct_ann += b.correct_ann;
        }
        Ok(())
    }

    /// Samples accumulated so far.
    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Finalizes means and ratios.
    pub fn report(&self) -> DiagnosticsReport {
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        let layers: Vec<LayerReport> = self
            .layers
            .iter()
            .map(|a| {
                let n = a.count.max(1) as f64;
                LayerReport {
                    layer: a.layer,
                    neurons: a.neurons,
                    residual_mean: a.residual_sum / n,
                    residual_abs_mean: a.residual_abs_sum / n,
                    residual_max: a.residual_max,
                    residual_min: a.residual_min,
                    unsaturated_fraction: 1.0 - a.saturated as f64 / n,
                    saturated_fraction: a.saturated as f64 / n,
                    sin_spikes: a.sin_spikes,
                    inactive_neurons: a.inactive,
                    rate_mean: a.rate_sum / n,
                    rate_max: a.rate_max,
                    rate_min: a.rate_min,
                    rate_error_mean: a.rate_err_sum / n,
                    rate_error_max: a.rate_err_max,
                    conservation_error: a.conservation,
                }
            })
            .collect();
        let pools: Vec<PoolReport> = self
            .pools
            .iter()
            .map(|a| PoolReport {
                layer: a.layer,
                mode: a.mode,
                error_mean: a.err_sum / a.positions.max(1) as f64,
                error_max: a.err_max,
                tolerance: a.tolerance,
                correct_ratio: ratio(a.correct, a.positive),
                correct_ratio_ann: ratio(a.correct_ann, a.positive_ann),
            })
            .collect();
        let neurons: u64 = self.layers.iter().map(|a| a.count).sum();
        let positions: u64 = self.pools.iter().map(|a| a.positions).sum();
        let sum_pools = |f: fn(&PoolAcc) -> u64| self.pools.iter().map(f).sum::<u64>();
        DiagnosticsReport {
            samples: self.samples,
            horizon: self.horizon,
            sin_total: self.layers.iter().map(|a| a.sin_spikes).sum(),
            mean_rate_error: self.layers.iter().map(|a| a.rate_err_sum).sum::<f64>() / neurons.max(1) as f64,
            pool_error_mean: (positions > 0)
                .then(|| self.pools.iter().map(|a| a.err_sum).sum::<f64>() / positions as f64),
            correct_ratio: ratio(sum_pools(|a| a.correct), sum_pools(|a| a.positive)),
            correct_ratio_ann: ratio(sum_pools(|a| a.correct_ann), sum_pools(|a| a.positive_ann)),
            energy: EnergyEstimate {
                ann: self.ann_energy,
                snn: self.snn_energy,
                ratio: if self.ann_energy > 0.0 { self.snn_energy / self.ann_energy } else { 0.0 },
            },
            layers,
            pools,
        }
    }
}
