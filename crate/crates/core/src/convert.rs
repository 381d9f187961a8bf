//! ANN-to-SNN conversion: batchnorm fusion, percentile activation scales,
//! weight normalization and construction of the spiking network.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{forward_ann, AnnModel, Conv2d, Layer, Linear};
use crate::network::{PoolingMode, SnnConfig, SnnNetwork, Stage};
use crate::tensor::Tensor;

/// Percentile used when none is given.
pub const DEFAULT_PERCENTILE: f64 = 99.9;

/// Floor applied to non-positive activation scales.
pub const MIN_SCALE: f32 = 1e-6;

/// Folds every `conv2d -> batchnorm2d` pair into a single convolution.
///
/// Per output channel, with `theta = sqrt(running_var + epsilon)`:
/// `w' = gamma / theta * w` and `b' = gamma / theta * (b - mean) + beta`.
/// A batchnorm that does not directly follow a convolution is an error.
pub fn fuse_batchnorm(model: &AnnModel) -> Result<AnnModel> {
    let mut layers: Vec<Layer> = Vec::with_capacity(model.layers().len());
    for (i, layer) in model.layers().iter().enumerate() {
        let Layer::BatchNorm2d(bn) = layer else {
            layers.push(layer.clone());
            continue;
        };
        let Some(Layer::Conv2d(conv)) = layers.last_mut() else {
            return Err(Error::Structure {
                layer: i,
                reason: "batchnorm2d must directly follow a conv2d to be fused".into(),
            });
        };
        if !matches!(model.layers().get(i.wrapping_sub(1)), Some(Layer::Conv2d(_))) {
            return Err(Error::Structure {
                layer: i,
                reason: "batchnorm2d must directly follow a conv2d to be fused".into(),
            });
        }
        let out_c = conv.out_channels();
        let per_channel = conv.weight.len() / out_c;
        let mut weight = conv.weight.data().to_vec();
        let mut bias = conv.bias.data().to_vec();
        for c in 0..out_c {
            let theta = libm::sqrt(f64::from(bn.running_var.data()[c]) + f64::from(bn.epsilon));
            let scale = f64::from(bn.gamma.data()[c]) / theta;
            for w in &mut weight[c * per_channel..(c + 1) * per_channel] {
                *w = (scale * f64::from(*w)) as f32;
            }
            bias[c] = (scale * (f64::from(bias[c]) - f64::from(bn.running_mean.data()[c]))
                + f64::from(bn.beta.data()[c])) as f32;
        }
        *conv = Conv2d {
            weight: Tensor::new(conv.weight.shape().to_vec(), weight)?,
            bias: Tensor::new(conv.bias.shape().to_vec(), bias)?,
            stride: conv.stride,
            padding: conv.padding,
        };
    }
    AnnModel::new(model.input_shape().to_vec(), layers)
}

/// 1-based nearest rank `ceil(p / 100 * n)`, clamped to `[1, n]`.
///
/// Products within 1e-9 of an integer are treated as that integer, so that
/// e.g. `p = 99.9, n = 1000` gives rank 999 despite binary rounding.
pub fn nearest_rank(n: usize, p: f64) -> usize {
    let x = p / 100.0 * n as f64;
    let r = libm::round(x);
    let rank = if libm::fabs(x - r) <= 1e-9 * r.max(1.0) { r } else { libm::ceil(x) };
    (rank as usize).clamp(1, n.max(1))
}

/// Nearest-rank `p`-th percentile of `sorted` (ascending). Returns `None`
/// for an empty slice.
pub fn percentile(sorted: &[f32], p: f64) -> Option<f32> {
    if sorted.is_empty() {
        return None;
    }
    Some(sorted[nearest_rank(sorted.len(), p) - 1])
}

fn check_percentile(p: f64) -> Result<()> {
    if p > 0.0 && p <= 100.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("percentile must be in (0, 100], got {p}")))
    }
}

fn ensure_fused(model: &AnnModel) -> Result<()> {
    match model.layers().iter().position(|l| matches!(l, Layer::BatchNorm2d(_))) {
        Some(i) => Err(Error::Structure { layer: i, reason: "batchnorm2d must be fused before conversion".into() }),
        None => Ok(()),
    }
}

/// Where each weighted layer's activation is measured: the first ReLU after
/// it and before the next weighted layer, or the weighted layer itself when
/// there is none (the output layer). Returns `(weighted, site)` pairs.
pub fn activation_sites(model: &AnnModel) -> Vec<(usize, usize)> {
    let layers = model.layers();
    let mut sites = Vec::new();
    for (i, layer) in layers.iter().enumerate() {
        if !layer.is_weighted() {
            continue;
        }
        let site = layers[i + 1..]
            .iter()
            .take_while(|l| !l.is_weighted())
            .position(|l| matches!(l, Layer::Relu))
            .map_or(i, |off| i + 1 + off);
        sites.push((i, site));
    }
    sites
}

/// Per-site activation scales and the percentile that produced them.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct NormalizationStats {
    /// Percentile in (0, 100].
    pub p: f64,
    /// λ₀, the scale of the raw input.
    pub lambda_input: f32,
    /// λ per activation site, keyed by layer index.
    pub lambda_per_layer: BTreeMap<usize, f32>,
    /// Sites whose scale was clamped to [`MIN_SCALE`].
    pub warnings: Vec<String>,
}

impl NormalizationStats {
    /// Statistics with every scale equal to 1 for the sites of `model`.
    pub fn identity(model: &AnnModel, p: f64) -> Self {
        Self {
            p,
            lambda_input: 1.0,
            lambda_per_layer: activation_sites(model).into_iter().map(|(_, s)| (s, 1.0)).collect(),
            warnings: Vec::new(),
        }
    }

    /// Scale recorded for `site`.
    pub fn lambda(&self, site: usize) -> Option<f32> {
        self.lambda_per_layer.get(&site).copied()
    }
}

/// Accumulates activation samples over calibration inputs.
///
/// Collectors over disjoint shards can be [`merge`](Self::merge)d; the result
/// of [`finish`](Self::finish) does not depend on merge order.
#[derive(Debug, Clone)]
pub struct StatsCollector {
    p: f64,
    sites: Vec<usize>,
    input: Vec<f32>,
    values: Vec<Vec<f32>>,
    samples: usize,
}

impl StatsCollector {
    /// Collector for the activation sites of `model` (which must be BN-free).
    pub fn new(model: &AnnModel, p: f64) -> Result<Self> {
        check_percentile(p)?;
        ensure_fused(model)?;
        let sites: Vec<usize> = activation_sites(model).into_iter().map(|(_, s)| s).collect();
        let values = vec![Vec::new(); sites.len()];
        Ok(Self { p, sites, input: Vec::new(), values, samples: 0 })
    }

    /// Records the input values and every site's activations for one sample.
    pub fn observe(&mut self, model: &AnnModel, input: &Tensor) -> Result<()> {
        let outputs = forward_ann(model, input)?;
        self.input.extend_from_slice(input.data());
        for (site, values) in self.sites.iter().zip(&mut self.values) {
            values.extend_from_slice(outputs[*site].data());
        }
        self.samples += 1;
        Ok(())
    }

    /// Number of samples observed.
    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Absorbs another collector built for the same model and percentile.
    pub fn merge(&mut self, other: StatsCollector) {
        debug_assert_eq!(self.sites, other.sites);
        self.input.extend(other.input);
        for (mine, theirs) in self.values.iter_mut().zip(other.values) {
            mine.extend(theirs);
        }
        self.samples += other.samples;
    }

    /// Sorts each sample set and takes its nearest-rank percentile.
    pub fn finish(self) -> Result<NormalizationStats> {
        if self.samples == 0 {
            return Err(Error::EmptyCalibration);
        }
        let p = self.p;
        let mut warnings = Vec::new();
        let mut scale = |name: String, mut values: Vec<f32>| -> f32 {
            values.sort_unstable_by(f32::total_cmp);
            let v = percentile(&values, p).unwrap_or(0.0);
            if v > 0.0 {
                v
            } else {
                warnings.push(format!("{name}: percentile activation {v} clamped to {MIN_SCALE}"));
                MIN_SCALE
            }
        };
        let lambda_input = scale(String::from("input"), self.input);
        let mut lambda_per_layer = BTreeMap::new();
        for (site, values) in self.sites.into_iter().zip(self.values) {
            let v = scale(format!("layer {site}"), values);
            lambda_per_layer.insert(site, v);
        }
        Ok(NormalizationStats { p, lambda_input, lambda_per_layer, warnings })
    }
}

/// λ per activation site: the nearest-rank `p`-th percentile of all values at
/// that site over the calibration set; λ₀ likewise over the raw inputs.
pub fn collect_activation_stats<'a, I>(model: &AnnModel, calibration: I, p: f64) -> Result<NormalizationStats>
where
    I: IntoIterator<Item = &'a Tensor>,
{
    let mut collector = StatsCollector::new(model, p)?;
    for input in calibration {
        collector.observe(model, input)?;
    }
    collector.finish()
}

/// Rescales every weighted layer so that its activation site is divided by
/// its λ: `w' = w * λ_prev / λ`, `b' = b / λ`, where `λ_prev` is the scale of
/// the previous weighted layer's site (λ₀ for the first).
pub fn normalize_weights(model: &AnnModel, stats: &NormalizationStats) -> Result<AnnModel> {
    ensure_fused(model)?;
    let mut layers = model.layers().to_vec();
    let mut prev = f64::from(stats.lambda_input);
    for (weighted, site) in activation_sites(model) {
        let lambda = f64::from(stats.lambda(site).ok_or(Error::MissingScale { layer: site })?);
        let w_scale = prev / lambda;
        let rescale = |t: &Tensor, s: f64| {
            Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| (f64::from(v) * s) as f32).collect())
        };
        layers[weighted] = match &layers[weighted] {
            Layer::Conv2d(c) => Layer::Conv2d(Conv2d {
                weight: rescale(&c.weight, w_scale)?,
                bias: rescale(&c.bias, 1.0 / lambda)?,
                stride: c.stride,
                padding: c.padding,
            }),
            Layer::Linear(l) => {
                Layer::Linear(Linear { weight: rescale(&l.weight, w_scale)?, bias: rescale(&l.bias, 1.0 / lambda)? })
            }
            _ => unreachable!("activation sites start at weighted layers"),
        };
        prev = lambda;
    }
    AnnModel::new(model.input_shape().to_vec(), layers)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Signal {
    Analog,
    Spikes,
    Pooled,
}

/// Builds the spiking network from a fused, normalized model.
///
/// ReLU layers become burst IF stages, max pooling becomes the stage selected
/// by `config.pooling`, average pooling and flatten carry over unchanged. The
/// last weighted layer is the readout: it accumulates current and never fires.
pub fn build_snn(model: &AnnModel, config: SnnConfig) -> Result<SnnNetwork> {
    config.validate()?;
    ensure_fused(model)?;
    let layers = model.layers();
    let readout = layers
        .iter()
        .rposition(Layer::is_weighted)
        .ok_or_else(|| Error::Structure { layer: 0, reason: "network has no conv2d or linear layer".into() })?;
    if let Some(off) = layers[readout + 1..].iter().position(|l| !matches!(l, Layer::Flatten)) {
        let i = readout + 1 + off;
        return Err(Error::Structure {
            layer: i,
            reason: format!("{} after the output layer is not supported", layers[i].kind()),
        });
    }

    let mut stages = Vec::with_capacity(layers.len());
    let mut fanout = Vec::with_capacity(layers.len());
    let mut signal = Signal::Analog;
    for (i, layer) in layers.iter().enumerate() {
        let mut fan = Vec::new();
        let stage = match layer {
            Layer::Conv2d(c) => {
                fan = c.geom(model.layer_input_shape(i)).expect("validated geometry").fanout();
                signal = Signal::Analog;
                Stage::Conv2d(c.clone())
            }
            Layer::Linear(l) => {
                fan = vec![l.out_features() as u32; l.in_features()];
                signal = Signal::Analog;
                Stage::Linear(l.clone())
            }
            Layer::Relu => {
                signal = Signal::Spikes;
                Stage::Spiking
            }
            Layer::MaxPool2d(pool) => {
                if config.pooling != PoolingMode::Average && signal != Signal::Spikes {
                    return Err(Error::Structure {
                        layer: i,
                        reason: format!("{} pooling needs spike input; place maxpool2d after relu", config.pooling),
                    });
                }
                if config.pooling == PoolingMode::Average && signal == Signal::Spikes {
                    signal = Signal::Pooled;
                }
                Stage::MaxPool { mode: config.pooling, pool: *pool }
            }
            Layer::AvgPool2d(pool) => {
                if signal == Signal::Spikes {
                    signal = Signal::Pooled;
                }
                Stage::AvgPool(*pool)
            }
            Layer::Flatten => Stage::Flatten,
            Layer::BatchNorm2d(_) => unreachable!("checked by ensure_fused"),
        };
        stages.push(stage);
        fanout.push(fan);
    }
    Ok(SnnNetwork {
        input_shape: model.input_shape().to_vec(),
        stages,
        shapes: model.shapes().to_vec(),
        fanout,
        readout,
        config,
    })
}
