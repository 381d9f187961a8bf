//! Clock-driven simulation of a converted network.
//!
//! At every step the input sample, divided by λ₀, is injected as a constant
//! analog current into the first layer. Stages then advance in order within
//! the step: counts emitted by a stage at step `t` are consumed by the next
//! stage at the same `t`. Weighted stages receive `W * counts + b`; the
//! readout stage only accumulates its current.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::{self, PoolGeom};
use crate::network::{PoolingMode, SnnNetwork, Stage, StageKind};
use crate::neuron::NeuronState;
use crate::pooling::argmax_first;
use crate::tensor::Tensor;

/// What [`simulate_with`] records beyond the always-present counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimOptions {
    /// Keep every neuron's count at every step (`T * n` integers per
    /// spiking stage).
    pub record_raster: bool,
}

/// Per-stage record of a simulation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum StageRecord {
    /// Conv2d or linear stage.
    Weighted {
        /// Accumulate operations triggered by incoming spike events
        /// (`count * fan-out` summed over inputs and steps).
        synaptic_ops: u64,
        /// Multiply-accumulates spent on analog (non-spike) input.
        dense_macs: u64,
    },
    /// Burst IF neurons.
    Spiking {
        /// Cumulative spikes per neuron.
        spikes: Vec<u32>,
        /// Spikes emitted by the whole stage at each step.
        step_totals: Vec<u64>,
        /// Membrane potential V(T) per neuron.
        membrane: Vec<f64>,
        /// Total input current per neuron over all steps.
        current_sum: Vec<f64>,
        /// `raster[t * n + i]`, when requested.
        raster: Option<Vec<u32>>,
    },
    /// Converted max pooling.
    Pool {
        /// Mode the stage ran in.
        mode: PoolingMode,
        /// Cumulative input per input neuron.
        input_sum: Vec<f64>,
        /// Cumulative output per output position.
        output_sum: Vec<f64>,
        /// Summed output of the whole stage at each step.
        step_totals: Vec<f64>,
    },
    /// Average pooling or flatten.
    Passive,
}

/// One stage of a [`SimTrace`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct StageTrace {
    /// Stage tag.
    pub kind: StageKind,
    /// Output shape of the stage.
    pub shape: Vec<usize>,
    /// Recorded quantities.
    pub record: StageRecord,
}

/// Everything recorded over one simulation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SimTrace {
    /// Number of steps simulated.
    pub horizon: usize,
    /// Burst cap used.
    pub gamma_cap: u32,
    /// Firing threshold used.
    pub v_threshold: f32,
    /// One entry per stage, aligned with the source model's layers.
    pub stages: Vec<StageTrace>,
    /// Readout current summed over all steps.
    pub output: Vec<f64>,
}

impl SimTrace {
    /// Firing rate per neuron (or pooled output rate) of stage `i`; `None`
    /// for stages that do not emit spikes.
    pub fn rates(&self, i: usize) -> Option<Vec<f64>> {
        let t = self.horizon as f64;
        match &self.stages.get(i)?.record {
            StageRecord::Spiking { spikes, .. } => Some(spikes.iter().map(|&s| f64::from(s) / t).collect()),
            StageRecord::Pool { output_sum, .. } => Some(output_sum.iter().map(|&s| s / t).collect()),
            _ => None,
        }
    }

    /// Spikes emitted by all spiking stages.
    pub fn total_spikes(&self) -> u64 {
        self.stages
            .iter()
            .map(|s| match &s.record {
                StageRecord::Spiking { spikes, .. } => spikes.iter().map(|&c| u64::from(c)).sum(),
                _ => 0,
            })
            .sum()
    }

    /// `(synaptic_ops, dense_macs)` summed over weighted stages.
    pub fn op_counts(&self) -> (u64, u64) {
        self.stages.iter().fold((0, 0), |(ac, mac), s| match s.record {
            StageRecord::Weighted { synaptic_ops, dense_macs } => (ac + synaptic_ops, mac + dense_macs),
            _ => (ac, mac),
        })
    }
}

/// Rates and class decision read from a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// `cum_spikes / T` for each emitting stage, `None` elsewhere.
    pub rates: Vec<Option<Vec<f64>>>,
    /// Index of the largest accumulated readout current, lowest on ties.
    pub prediction: usize,
}

/// Rates per stage and the argmax prediction.
pub fn decode(trace: &SimTrace) -> Decoded {
    Decoded { rates: (0..trace.stages.len()).map(|i| trace.rates(i)).collect(), prediction: argmax_f64(&trace.output) }
}

pub(crate) fn argmax_f64(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Form {
    Dense,
    Spikes,
    Pooled,
    Passthrough,
}

#[derive(Debug, Clone)]
struct Out {
    form: Form,
    values: Vec<f64>,
    counts: Vec<u32>,
    events: Vec<u32>,
}

impl Out {
    fn new(form: Form, n: usize) -> Self {
        let (values, counts, events) = match form {
            Form::Dense => (vec![0.0; n], Vec::new(), Vec::new()),
            Form::Spikes => (Vec::new(), vec![0; n], Vec::new()),
            Form::Pooled => (vec![0.0; n], Vec::new(), vec![0; n]),
            Form::Passthrough => (Vec::new(), Vec::new(), Vec::new()),
        };
        Self { form, values, counts, events }
    }
}

#[derive(Clone, Copy)]
enum View<'a> {
    Dense(&'a [f64]),
    Spikes(&'a [u32]),
    Pooled(&'a [f64], &'a [u32]),
}

fn view<'a>(outs: &'a [Out], encoded: &'a [f64]) -> View<'a> {
    for out in outs.iter().rev() {
        match out.form {
            Form::Dense => return View::Dense(&out.values),
            Form::Spikes => return View::Spikes(&out.counts),
            Form::Pooled => return View::Pooled(&out.values, &out.events),
            Form::Passthrough => continue,
        }
    }
    View::Dense(encoded)
}

enum State {
    Weighted {
        synaptic_ops: u64,
        dense_macs: u64,
        mac_count: u64,
    },
    Spiking {
        neurons: NeuronState,
        current_sum: Vec<f64>,
        step_totals: Vec<u64>,
        raster: Option<Vec<u32>>,
        current: Vec<f64>,
    },
    Pool {
        geom: PoolGeom,
        mode: PoolingMode,
        cum_in: Vec<u64>,
        running_max: Vec<u64>,
        input_sum: Vec<f64>,
        output_sum: Vec<f64>,
        step_totals: Vec<f64>,
    },
    AvgPool {
        geom: PoolGeom,
    },
    Passive,
}

/// Runs the network for `horizon` steps with a full per-step raster.
pub fn simulate(net: &SnnNetwork, input: &Tensor, horizon: usize) -> Result<SimTrace> {
    simulate_with(net, input, horizon, SimOptions { record_raster: true })
}

/// Runs the network for `horizon` steps.
pub fn simulate_with(net: &SnnNetwork, input: &Tensor, horizon: usize, options: SimOptions) -> Result<SimTrace> {
    if horizon < 1 {
        return Err(Error::InvalidConfig("horizon T must be at least 1".into()));
    }
    if input.shape() != net.input_shape() {
        return Err(Error::InputShape { expected: net.input_shape().to_vec(), actual: input.shape().to_vec() });
    }
    let cfg = net.config();
    let gamma = cfg.gamma_cap;
    let v_th = f64::from(cfg.v_threshold);
    let scale = f64::from(cfg.input_scale);
    let encoded: Vec<f64> = input.data().iter().map(|&x| f64::from(x) / scale).collect();
    let stages = net.stages();
    let n_stages = net.readout() + 1;

    // Stages before the first spiking stage see only the constant input.
    let constant_prefix = stages.iter().position(|s| matches!(s, Stage::Spiking)).unwrap_or(stages.len());

    let mut outs: Vec<Out> = Vec::with_capacity(n_stages);
    let mut states: Vec<State> = Vec::with_capacity(n_stages);
    for (i, stage) in stages[..n_stages].iter().enumerate() {
        let n_out: usize = net.shapes()[i].iter().product();
        let upstream = outs.iter().rev().map(|o| o.form).find(|f| *f != Form::Passthrough).unwrap_or(Form::Dense);
        let (form, state) = match stage {
            Stage::Conv2d(_) | Stage::Linear(_) => {
                let mac_count = net.fanout(i).iter().map(|&f| u64::from(f)).sum();
                (Form::Dense, State::Weighted { synaptic_ops: 0, dense_macs: 0, mac_count })
            }
            Stage::Spiking => (
                Form::Spikes,
                State::Spiking {
                    neurons: NeuronState::new(n_out),
                    current_sum: vec![0.0; n_out],
                    step_totals: Vec::with_capacity(horizon),
                    raster: options.record_raster.then(|| Vec::with_capacity(horizon * n_out)),
                    current: vec![0.0; n_out],
                },
            ),
            Stage::MaxPool { mode, pool } => {
                let geom =
                    PoolGeom::new(net.stage_input_shape(i), pool.kernel, pool.stride).expect("validated geometry");
                let n_in = geom.c * geom.in_h * geom.in_w;
                let form = match (mode, upstream) {
                    (PoolingMode::Average, Form::Dense) => Form::Dense,
                    (PoolingMode::Average, _) => Form::Pooled,
                    _ => Form::Spikes,
                };
                (
                    form,
                    State::Pool {
                        geom,
                        mode: *mode,
                        cum_in: vec![0; if form == Form::Spikes { n_in } else { 0 }],
                        running_max: vec![0; n_out],
                        input_sum: vec![0.0; n_in],
                        output_sum: vec![0.0; n_out],
                        step_totals: Vec::with_capacity(horizon),
                    },
                )
            }
            Stage::AvgPool(pool) => {
                let geom =
                    PoolGeom::new(net.stage_input_shape(i), pool.kernel, pool.stride).expect("validated geometry");
                (if upstream == Form::Dense { Form::Dense } else { Form::Pooled }, State::AvgPool { geom })
            }
            Stage::Flatten => (Form::Passthrough, State::Passive),
        };
        outs.push(Out::new(form, n_out));
        states.push(state);
    }

    let mut output = vec![0.0; net.shapes()[net.readout()].iter().product()];
    let mut scratch: Vec<f64> = Vec::new();
    let mut window: Vec<usize> = Vec::new();

    for t in 0..horizon {
        for i in 0..n_stages {
            let (before, rest) = outs.split_at_mut(i);
            let out = &mut rest[0];
            let input = view(before, &encoded);
            let cached = i < constant_prefix && t > 0;
            match (&stages[i], &mut states[i]) {
                (
                    stage @ (Stage::Conv2d(_) | Stage::Linear(_)),
                    State::Weighted { synaptic_ops, dense_macs, mac_count },
                ) => {
                    if cached {
                        *dense_macs += *mac_count;
                    } else {
                        weighted_step(net, i, stage, input, out, &mut scratch, synaptic_ops, dense_macs, *mac_count);
                    }
                    if i == net.readout() {
                        for (acc, &c) in output.iter_mut().zip(&out.values) {
                            *acc += c;
                        }
                    }
                }
                (Stage::Spiking, State::Spiking { neurons, current_sum, step_totals, raster, current }) => {
                    match input {
                        View::Dense(v) | View::Pooled(v, _) => current.copy_from_slice(v),
                        View::Spikes(c) => {
                            for (dst, &s) in current.iter_mut().zip(c) {
                                *dst = f64::from(s);
                            }
                        }
                    }
                    for (acc, &c) in current_sum.iter_mut().zip(current.iter()) {
                        *acc += c;
                    }
                    neurons.step_burst_into(current, gamma, v_th, &mut out.counts);
                    step_totals.push(out.counts.iter().map(|&c| u64::from(c)).sum());
                    if let Some(r) = raster {
                        r.extend_from_slice(&out.counts);
                    }
                }
                (
                    Stage::MaxPool { .. },
                    State::Pool { geom, mode, cum_in, running_max, input_sum, output_sum, step_totals },
                ) => {
                    if cached {
                        step_totals.push(out.values.iter().sum());
                    } else if *mode == PoolingMode::Average {
                        average_step(geom, input, out, &mut window);
                        step_totals.push(out.values.iter().sum());
                    } else {
                        let View::Spikes(counts) = input else { unreachable!("spike pooling validated at build") };
                        for (c, &s) in cum_in.iter_mut().zip(counts) {
                            *c += u64::from(s);
                        }
                        let mut total = 0u64;
                        for (o, (slot, seen)) in out.counts.iter_mut().zip(running_max.iter_mut()).enumerate() {
                            geom.window(o, &mut window);
                            let emitted = if *mode == PoolingMode::Lip {
                                let max = window.iter().map(|&j| cum_in[j]).max().unwrap_or(0);
                                let inc = max - *seen;
                                *seen = max;
                                inc as u32
                            } else {
                                counts[window[argmax_first(window.iter().map(|&j| cum_in[j]))]]
                            };
                            *slot = emitted;
                            total += u64::from(emitted);
                        }
                        step_totals.push(total as f64);
                    }
                    match input {
                        View::Dense(v) | View::Pooled(v, _) => add_into(input_sum, v.iter().copied()),
                        View::Spikes(c) => add_into(input_sum, c.iter().map(|&s| f64::from(s))),
                    }
                    match out.form {
                        Form::Spikes => add_into(output_sum, out.counts.iter().map(|&s| f64::from(s))),
                        _ => add_into(output_sum, out.values.iter().copied()),
                    }
                }
                (Stage::AvgPool(_), State::AvgPool { geom }) => {
                    if !cached {
                        average_step(geom, input, out, &mut window);
                    }
                }
                (Stage::Flatten, State::Passive) => {}
                _ => unreachable!("stage/state mismatch"),
            }
        }
    }

    let mut traces = Vec::with_capacity(stages.len());
    for (i, state) in states.into_iter().enumerate() {
        let record = match state {
            State::Weighted { synaptic_ops, dense_macs, .. } => StageRecord::Weighted { synaptic_ops, dense_macs },
            State::Spiking { neurons, current_sum, step_totals, raster, .. } => StageRecord::Spiking {
                spikes: neurons.spikes().to_vec(),
                membrane: neurons.potentials().to_vec(),
                step_totals,
                current_sum,
                raster,
            },
            State::Pool { mode, input_sum, output_sum, step_totals, .. } => {
                StageRecord::Pool { mode, input_sum, output_sum, step_totals }
            }
            State::AvgPool { .. } | State::Passive => StageRecord::Passive,
        };
        traces.push(StageTrace { kind: stages[i].kind(), shape: net.shapes()[i].clone(), record });
    }
    for (stage, shape) in stages.iter().zip(net.shapes()).skip(n_stages) {
        traces.push(StageTrace { kind: stage.kind(), shape: shape.clone(), record: StageRecord::Passive });
    }
    Ok(SimTrace { horizon, gamma_cap: gamma, v_threshold: cfg.v_threshold, stages: traces, output })
}

fn add_into(acc: &mut [f64], values: impl Iterator<Item = f64>) {
    for (a, v) in acc.iter_mut().zip(values) {
        *a += v;
    }
}

#[allow(clippy::too_many_arguments)]
fn weighted_step(
    net: &SnnNetwork,
    i: usize,
    stage: &Stage,
    input: View<'_>,
    out: &mut Out,
    scratch: &mut Vec<f64>,
    synaptic_ops: &mut u64,
    dense_macs: &mut u64,
    mac_count: u64,
) {
    let fanout = net.fanout(i);
    let sparse: &[f64] = match input {
        View::Dense(x) => {
            match stage {
                Stage::Conv2d(c) => {
                    let g = c.geom(net.stage_input_shape(i)).expect("validated geometry");
                    kernels::conv2d_dense(&g, c.weight.data(), Some(c.bias.data()), x, &mut out.values);
                }
                Stage::Linear(l) => kernels::linear_dense(l.weight.data(), Some(l.bias.data()), x, &mut out.values),
                _ => unreachable!(),
            }
            *dense_macs += mac_count;
            return;
        }
        View::Spikes(counts) => {
            scratch.clear();
            scratch.extend(counts.iter().map(|&c| f64::from(c)));
            *synaptic_ops += counts.iter().zip(fanout).map(|(&c, &f)| u64::from(c) * u64::from(f)).sum::<u64>();
            scratch
        }
        View::Pooled(values, events) => {
            *synaptic_ops += events.iter().zip(fanout).map(|(&e, &f)| u64::from(e) * u64::from(f)).sum::<u64>();
            values
        }
    };
    match stage {
        Stage::Conv2d(c) => {
            let g = c.geom(net.stage_input_shape(i)).expect("validated geometry");
            let plane = g.out_h * g.out_w;
            for (o, chunk) in out.values.chunks_mut(plane).enumerate() {
                chunk.fill(f64::from(c.bias.data()[o]));
            }
            kernels::conv2d_scatter(&g, c.weight.data(), sparse, &mut out.values);
        }
        Stage::Linear(l) => {
            for (o, &b) in out.values.iter_mut().zip(l.bias.data()) {
                *o = f64::from(b);
            }
            kernels::linear_scatter(l.weight.data(), sparse, &mut out.values);
        }
        _ => unreachable!(),
    }
}

fn average_step(geom: &PoolGeom, input: View<'_>, out: &mut Out, window: &mut Vec<usize>) {
    match input {
        View::Dense(x) => kernels::avg_pool(geom, x, &mut out.values),
        View::Spikes(c) => {
            kernels::avg_pool(geom, c.iter().map(|&s| f64::from(s)).collect::<Vec<_>>().as_slice(), &mut out.values);
            for (o, e) in out.events.iter_mut().enumerate() {
                geom.window(o, window);
                *e = window.iter().map(|&j| c[j]).sum();
            }
        }
        View::Pooled(x, ev) => {
            kernels::avg_pool(geom, x, &mut out.values);
            for (o, e) in out.events.iter_mut().enumerate() {
                geom.window(o, window);
                *e = window.iter().map(|&j| ev[j]).sum();
            }
        }
    }
}
