#![allow(dead_code)]

use rand::Rng;
use spikeforge_core::{AnnModel, BatchNorm2d, Conv2d, Layer, Linear, Pool2d, Tensor};

pub fn tensor(rng: &mut impl Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

pub fn linear(rng: &mut impl Rng, n_in: usize, n_out: usize) -> Layer {
    Layer::Linear(Linear { weight: tensor(rng, &[n_out, n_in], -0.6, 0.6), bias: tensor(rng, &[n_out], -0.2, 0.2) })
}

pub fn conv(rng: &mut impl Rng, c_in: usize, c_out: usize, k: usize, stride: usize, padding: usize) -> Layer {
    Layer::Conv2d(Conv2d {
        weight: tensor(rng, &[c_out, c_in, k, k], -0.5, 0.5),
        bias: tensor(rng, &[c_out], -0.1, 0.1),
        stride,
        padding,
    })
}

pub fn batchnorm(rng: &mut impl Rng, c: usize) -> Layer {
    Layer::BatchNorm2d(BatchNorm2d {
        gamma: tensor(rng, &[c], 0.5, 1.5),
        beta: tensor(rng, &[c], -0.3, 0.3),
        running_mean: tensor(rng, &[c], -0.2, 0.2),
        running_var: tensor(rng, &[c], 0.3, 2.0),
        epsilon: 1e-5,
    })
}

pub fn mlp(rng: &mut impl Rng, sizes: &[usize]) -> AnnModel {
    let mut layers = Vec::new();
    for (i, w) in sizes.windows(2).enumerate() {
        layers.push(linear(rng, w[0], w[1]));
        if i + 2 < sizes.len() {
            layers.push(Layer::Relu);
        }
    }
    AnnModel::new(vec![sizes[0]], layers).unwrap()
}

/// `[2, 6, 6]` input: conv, BN, relu, maxpool, conv, relu, flatten, linear.
pub fn cnn(rng: &mut impl Rng, with_bn: bool) -> AnnModel {
    let mut layers = vec![conv(rng, 2, 4, 3, 1, 1)];
    if with_bn {
        layers.push(batchnorm(rng, 4));
    }
    layers.extend([
        Layer::Relu,
        Layer::MaxPool2d(Pool2d { kernel: 2, stride: 2 }),
        conv(rng, 4, 5, 3, 1, 1),
        Layer::Relu,
        Layer::Flatten,
        linear(rng, 45, 3),
    ]);
    AnnModel::new(vec![2, 6, 6], layers).unwrap()
}

pub fn identity_net() -> AnnModel {
    let one = || Linear {
        weight: Tensor::new(vec![1, 1], vec![1.0]).unwrap(),
        bias: Tensor::new(vec![1], vec![0.0]).unwrap(),
    };
    AnnModel::new(vec![1], vec![Layer::Linear(one()), Layer::Relu, Layer::Linear(one())]).unwrap()
}
