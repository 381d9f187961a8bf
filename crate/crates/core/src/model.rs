//! Feed-forward ANN representation and its exact forward pass.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::kernels::{self, conv_out_dim, ConvGeom, PoolGeom};
use crate::tensor::Tensor;

/// Zero-padded 2-D convolution, weight `[out_ch, in_ch, kh, kw]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// Kernel weights, `[out_ch, in_ch, kh, kw]`.
    pub weight: Tensor,
    /// Per-output-channel bias, `[out_ch]`.
    pub bias: Tensor,
    /// Step between windows, at least 1.
    pub stride: usize,
    /// Zero padding on every spatial border.
    pub padding: usize,
}

/// Fully connected layer, weight `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// Weights, `[out, in]`.
    pub weight: Tensor,
    /// Bias, `[out]`.
    pub bias: Tensor,
}

/// Inference-mode batch normalization over channels of a `[C, H, W]` input.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d {
    /// Scale, `[C]`.
    pub gamma: Tensor,
    /// Shift, `[C]`.
    pub beta: Tensor,
    /// Running mean, `[C]`.
    pub running_mean: Tensor,
    /// Running variance, `[C]`, non-negative.
    pub running_var: Tensor,
    /// Added to the variance before the square root.
    pub epsilon: f32,
}

/// Square pooling window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool2d {
    /// Window side length.
    pub kernel: usize,
    /// Step between windows.
    pub stride: usize,
}

/// One layer of an [`AnnModel`].
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// 2-D convolution.
    Conv2d(Conv2d),
    /// Fully connected.
    Linear(Linear),
    /// `max(0, x)`.
    Relu,
    /// Batch normalization (inference form).
    BatchNorm2d(BatchNorm2d),
    /// Windowed maximum.
    MaxPool2d(Pool2d),
    /// Windowed mean.
    AvgPool2d(Pool2d),
    /// Collapse to one dimension.
    Flatten,
}

/// Layer kind tag, named as in the bundle manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum LayerKind {
    /// `conv2d`
    Conv2d,
    /// `linear`
    Linear,
    /// `relu`
    Relu,
    /// `batchnorm2d`
    BatchNorm2d,
    /// `maxpool2d`
    MaxPool2d,
    /// `avgpool2d`
    AvgPool2d,
    /// `flatten`
    Flatten,
}

impl LayerKind {
    /// Manifest name of the kind.
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::Linear => "linear",
            LayerKind::Relu => "relu",
            LayerKind::BatchNorm2d => "batchnorm2d",
            LayerKind::MaxPool2d => "maxpool2d",
            LayerKind::AvgPool2d => "avgpool2d",
            LayerKind::Flatten => "flatten",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Conv2d {
    pub(crate) fn geom(&self, input: &[usize]) -> Option<ConvGeom> {
        let [out_c, in_c, kh, kw] = *self.weight.shape() else { return None };
        let [c, in_h, in_w] = *input else { return None };
        if c != in_c {
            return None;
        }
        Some(ConvGeom {
            in_c,
            in_h,
            in_w,
            out_c,
            kh,
            kw,
            stride: self.stride,
            pad: self.padding,
            out_h: conv_out_dim(in_h, kh, self.stride, self.padding)?,
            out_w: conv_out_dim(in_w, kw, self.stride, self.padding)?,
        })
    }

    /// Number of output channels.
    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }
}

impl Linear {
    /// Number of output features.
    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Number of input features.
    pub fn in_features(&self) -> usize {
        self.weight.shape().get(1).copied().unwrap_or(0)
    }
}

impl Layer {
    /// The layer's kind tag.
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::Linear(_) => LayerKind::Linear,
            Layer::Relu => LayerKind::Relu,
            Layer::BatchNorm2d(_) => LayerKind::BatchNorm2d,
            Layer::MaxPool2d(_) => LayerKind::MaxPool2d,
            Layer::AvgPool2d(_) => LayerKind::AvgPool2d,
            Layer::Flatten => LayerKind::Flatten,
        }
    }

    /// True for conv2d and linear.
    pub fn is_weighted(&self) -> bool {
        matches!(self, Layer::Conv2d(_) | Layer::Linear(_))
    }

    /// Checks that the layer's own parameters agree with each other.
    pub fn check_params(&self, index: usize) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidLayer { layer: index, reason });
        match self {
            Layer::Conv2d(c) => {
                if c.weight.shape().len() != 4 {
                    return bad(format!("conv2d weight must be 4-D, got {:?}", c.weight.shape()));
                }
                if c.bias.shape() != [c.out_channels()] {
                    return bad(format!(
                        "conv2d bias {:?} does not match {} output channels",
                        c.bias.shape(),
                        c.out_channels()
                    ));
                }
                if c.stride == 0 {
                    return bad("conv2d stride must be at least 1".into());
                }
            }
            Layer::Linear(l) => {
                if l.weight.shape().len() != 2 {
                    return bad(format!("linear weight must be 2-D, got {:?}", l.weight.shape()));
                }
                if l.bias.shape() != [l.out_features()] {
                    return bad(format!(
                        "linear bias {:?} does not match {} outputs",
                        l.bias.shape(),
                        l.out_features()
                    ));
                }
            }
            Layer::BatchNorm2d(bn) => {
                let c = bn.gamma.len();
                for (name, t) in [
                    ("gamma", &bn.gamma),
                    ("beta", &bn.beta),
                    ("running_mean", &bn.running_mean),
                    ("running_var", &bn.running_var),
                ] {
                    if t.shape() != [c] {
                        return bad(format!("batchnorm {name} shape {:?}, expected [{c}]", t.shape()));
                    }
                }
                if bn.running_var.data().iter().any(|&v| v < 0.0) {
                    return bad("batchnorm running_var must be non-negative".into());
                }
                if !(bn.epsilon >= 0.0 && bn.epsilon.is_finite()) {
                    return bad("batchnorm epsilon must be finite and non-negative".into());
                }
                if bn.running_var.data().iter().any(|&v| f64::from(v) + f64::from(bn.epsilon) <= 0.0) {
                    return bad("batchnorm running_var + epsilon must be positive".into());
                }
            }
            Layer::MaxPool2d(p) | Layer::AvgPool2d(p) => {
                if p.kernel == 0 || p.stride == 0 {
                    return bad("pool kernel and stride must be at least 1".into());
                }
            }
            Layer::Relu | Layer::Flatten => {}
        }
        Ok(())
    }

    /// Shape produced from an input of shape `input`.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: String| Error::Shape { layer: index, expected, actual: input.to_vec() };
        match self {
            Layer::Conv2d(c) => {
                let g = c.geom(input).ok_or_else(|| {
                    let w = c.weight.shape();
                    mismatch(format!("[{}, H, W] with H+2p >= {} and W+2p >= {}", w[1], w[2], w[3]))
                })?;
                Ok(vec![g.out_c, g.out_h, g.out_w])
            }
            Layer::Linear(l) => {
                if input != [l.in_features()] {
                    return Err(mismatch(format!("[{}]", l.in_features())));
                }
                Ok(vec![l.out_features()])
            }
            Layer::BatchNorm2d(bn) => match input {
                [c, _, _] if *c == bn.gamma.len() => Ok(input.to_vec()),
                _ => Err(mismatch(format!("[{}, H, W]", bn.gamma.len()))),
            },
            Layer::MaxPool2d(p) | Layer::AvgPool2d(p) => {
                let g = PoolGeom::new(input, p.kernel, p.stride)
                    .ok_or_else(|| mismatch(format!("[C, H, W] with H, W >= {}", p.kernel)))?;
                Ok(vec![g.c, g.out_h, g.out_w])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    /// Applies the layer to `input`, whose shape has already been validated.
    fn apply(&self, index: usize, input: &Tensor, out_shape: &[usize]) -> Result<Tensor> {
        let n_out: usize = out_shape.iter().product();
        let mut acc = vec![0.0f64; n_out];
        match self {
            Layer::Conv2d(c) => {
                let g = c.geom(input.shape()).expect("validated geometry");
                kernels::conv2d_dense(&g, c.weight.data(), Some(c.bias.data()), input.data(), &mut acc);
            }
            Layer::Linear(l) => {
                kernels::linear_dense(l.weight.data(), Some(l.bias.data()), input.data(), &mut acc);
            }
            Layer::BatchNorm2d(bn) => {
                let plane: usize = input.shape()[1..].iter().product();
                for (i, (&x, a)) in input.data().iter().zip(acc.iter_mut()).enumerate() {
                    let c = i / plane;
                    let theta = libm::sqrt(f64::from(bn.running_var.data()[c]) + f64::from(bn.epsilon));
                    *a = f64::from(bn.gamma.data()[c]) / theta * (f64::from(x) - f64::from(bn.running_mean.data()[c]))
                        + f64::from(bn.beta.data()[c]);
                }
            }
            Layer::MaxPool2d(p) => {
                let g = PoolGeom::new(input.shape(), p.kernel, p.stride).expect("validated geometry");
                kernels::max_pool(&g, input.data(), &mut acc);
            }
            Layer::AvgPool2d(p) => {
                let g = PoolGeom::new(input.shape(), p.kernel, p.stride).expect("validated geometry");
                kernels::avg_pool(&g, input.data(), &mut acc);
            }
            Layer::Relu => {
                let data = input.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
                return Ok(Tensor::from_parts_unchecked(out_shape.to_vec(), data));
            }
            Layer::Flatten => return Ok(Tensor::from_parts_unchecked(out_shape.to_vec(), input.data().to_vec())),
        }
        let data: Vec<f32> = acc.into_iter().map(|v| v as f32).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: index });
        }
        Ok(Tensor::from_parts_unchecked(out_shape.to_vec(), data))
    }
}

/// Propagates `input_shape` through `layers`, returning the output shape of
/// every layer or the first inconsistency.
pub fn validate_shapes(input_shape: &[usize], layers: &[Layer]) -> Result<Vec<Vec<usize>>> {
    if input_shape.is_empty() || input_shape.contains(&0) {
        return Err(Error::InputShape { expected: Vec::new(), actual: input_shape.to_vec() });
    }
    let mut shapes = Vec::with_capacity(layers.len());
    let mut current = input_shape.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        layer.check_params(i)?;
        current = layer.output_shape(i, &current)?;
        shapes.push(current.clone());
    }
    Ok(shapes)
}

/// A shape-checked feed-forward network. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnModel {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    shapes: Vec<Vec<usize>>,
}

impl AnnModel {
    /// Builds a model, validating every layer and the shape chain.
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        let shapes = validate_shapes(&input_shape, &layers)?;
        Ok(Self { input_shape, layers, shapes })
    }

    /// Shape of one input sample.
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Layers in evaluation order.
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Output shape of every layer.
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    /// Input shape of layer `i`.
    pub fn layer_input_shape(&self, i: usize) -> &[usize] {
        if i == 0 {
            &self.input_shape
        } else {
            &self.shapes[i - 1]
        }
    }

    /// Output shape of the last layer.
    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().map_or(&self.input_shape, Vec::as_slice)
    }

    /// Decomposes into `(input_shape, layers)`.
    pub fn into_parts(self) -> (Vec<usize>, Vec<Layer>) {
        (self.input_shape, self.layers)
    }

    /// Bitwise equality of structure and all parameters.
    pub fn bit_eq(&self, other: &AnnModel) -> bool {
        fn layer_eq(a: &Layer, b: &Layer) -> bool {
            match (a, b) {
                (Layer::Conv2d(x), Layer::Conv2d(y)) => {
                    x.weight.bit_eq(&y.weight)
                        && x.bias.bit_eq(&y.bias)
                        && x.stride == y.stride
                        && x.padding == y.padding
                }
                (Layer::Linear(x), Layer::Linear(y)) => x.weight.bit_eq(&y.weight) && x.bias.bit_eq(&y.bias),
                (Layer::BatchNorm2d(x), Layer::BatchNorm2d(y)) => {
                    x.gamma.bit_eq(&y.gamma)
                        && x.beta.bit_eq(&y.beta)
                        && x.running_mean.bit_eq(&y.running_mean)
                        && x.running_var.bit_eq(&y.running_var)
                        && x.epsilon.to_bits() == y.epsilon.to_bits()
                }
                _ => a == b,
            }
        }
        self.input_shape == other.input_shape
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| layer_eq(a, b))
    }

    /// Multiply-accumulate count of one inference, over conv2d and linear
    /// layers.
    pub fn mac_count(&self) -> u64 {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, layer)| match layer {
                Layer::Conv2d(c) => {
                    let g = c.geom(self.layer_input_shape(i)).expect("validated geometry");
                    g.fanout().iter().map(|&f| u64::from(f)).sum()
                }
                Layer::Linear(l) => (l.in_features() * l.out_features()) as u64,
                _ => 0,
            })
            .sum()
    }
}

/// Evaluates the model on one sample, returning the output of every layer.
///
/// Convolution and dense layers accumulate in `f64` and round once to `f32`.
pub fn forward_ann(model: &AnnModel, input: &Tensor) -> Result<Vec<Tensor>> {
    if input.shape() != model.input_shape() {
        return Err(Error::InputShape { expected: model.input_shape.clone(), actual: input.shape().to_vec() });
    }
    let mut outputs: Vec<Tensor> = Vec::with_capacity(model.layers.len());
    for (i, layer) in model.layers.iter().enumerate() {
        let prev = outputs.last().unwrap_or(input);
        let next = layer.apply(i, prev, &model.shapes[i])?;
        outputs.push(next);
    }
    Ok(outputs)
}
