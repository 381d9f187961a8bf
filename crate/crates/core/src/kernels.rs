//! Convolution, dense and pooling kernels shared by the ANN forward pass and
//! the spiking simulator. Accumulation is in `f64`.

use alloc::vec::Vec;

/// Geometry of a zero-padded 2-D convolution over a `[C, H, W]` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

pub(crate) fn conv_out_dim(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = n + 2 * pad;
    (stride >= 1 && padded >= k).then(|| (padded - k) / stride + 1)
}

pub(crate) fn pool_out_dim(n: usize, k: usize, stride: usize) -> Option<usize> {
    (stride >= 1 && k >= 1 && n >= k).then(|| (n - k) / stride + 1)
}

impl ConvGeom {
    pub fn out_len(&self) -> usize {
        self.out_c * self.out_h * self.out_w
    }

    /// Output rows touched by input row `i` along one axis.
    fn reach(i: usize, k: usize, stride: usize, pad: usize, out: usize) -> impl Iterator<Item = (usize, usize)> {
        (0..k).filter_map(move |kk| {
            let t = (i + pad).checked_sub(kk)?;
            (t % stride == 0 && t / stride < out).then_some((kk, t / stride))
        })
    }

    /// Number of multiply-accumulates each input element takes part in.
    pub fn fanout(&self) -> Vec<u32> {
        let rows: Vec<u32> =
            (0..self.in_h).map(|y| Self::reach(y, self.kh, self.stride, self.pad, self.out_h).count() as u32).collect();
        let cols: Vec<u32> =
            (0..self.in_w).map(|x| Self::reach(x, self.kw, self.stride, self.pad, self.out_w).count() as u32).collect();
        let mut out = Vec::with_capacity(self.in_c * self.in_h * self.in_w);
        for _ in 0..self.in_c {
            for &r in &rows {
                for &c in &cols {
                    out.push(self.out_c as u32 * r * c);
                }
            }
        }
        out
    }
}

/// Gather-form convolution: `out = bias + W * input`.
pub(crate) fn conv2d_dense<T: Copy + Into<f64>>(
    g: &ConvGeom,
    weight: &[f32],
    bias: Option<&[f32]>,
    input: &[T],
    out: &mut [f64],
) {
    debug_assert_eq!(input.len(), g.in_c * g.in_h * g.in_w);
    debug_assert_eq!(out.len(), g.out_len());
    let plane = g.in_h * g.in_w;
    let ksize = g.kh * g.kw;
    for o in 0..g.out_c {
        let b = bias.map_or(0.0, |b| f64::from(b[o]));
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let mut acc = b;
                for c in 0..g.in_c {
                    let wbase = (o * g.in_c + c) * ksize;
                    for ky in 0..g.kh {
                        let iy = (oy * g.stride + ky).wrapping_sub(g.pad);
                        if iy >= g.in_h {
                            continue;
                        }
                        for kx in 0..g.kw {
                            let ix = (ox * g.stride + kx).wrapping_sub(g.pad);
                            if ix >= g.in_w {
                                continue;
                            }
                            let x: f64 = input[c * plane + iy * g.in_w + ix].into();
                            acc += f64::from(weight[wbase + ky * g.kw + kx]) * x;
                        }
                    }
                }
                out[(o * g.out_h + oy) * g.out_w + ox] = acc;
            }
        }
    }
}

/// Scatter-form convolution: adds `W * input` into `out`, visiting only
/// non-zero inputs.
pub(crate) fn conv2d_scatter(g: &ConvGeom, weight: &[f32], input: &[f64], out: &mut [f64]) {
    let plane = g.in_h * g.in_w;
    let ksize = g.kh * g.kw;
    let out_plane = g.out_h * g.out_w;
    for (idx, &v) in input.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let c = idx / plane;
        let iy = (idx % plane) / g.in_w;
        let ix = idx % g.in_w;
        for (ky, oy) in ConvGeom::reach(iy, g.kh, g.stride, g.pad, g.out_h) {
            for (kx, ox) in ConvGeom::reach(ix, g.kw, g.stride, g.pad, g.out_w) {
                let pos = oy * g.out_w + ox;
                let koff = ky * g.kw + kx;
                for o in 0..g.out_c {
                    out[o * out_plane + pos] += f64::from(weight[(o * g.in_c + c) * ksize + koff]) * v;
                }
            }
        }
    }
}

/// Gather-form dense layer with `weight` laid out `[out, in]`.
pub(crate) fn linear_dense<T: Copy + Into<f64>>(weight: &[f32], bias: Option<&[f32]>, input: &[T], out: &mut [f64]) {
    let n_in = input.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &weight[i * n_in..(i + 1) * n_in];
        let mut acc = bias.map_or(0.0, |b| f64::from(b[i]));
        for (&w, &x) in row.iter().zip(input) {
            acc += f64::from(w) * x.into();
        }
        *o = acc;
    }
}

/// Scatter-form dense layer: adds `W * input` into `out` over non-zero inputs.
pub(crate) fn linear_scatter(weight: &[f32], input: &[f64], out: &mut [f64]) {
    let n_in = input.len();
    for (j, &v) in input.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += f64::from(weight[i * n_in + j]) * v;
        }
    }
}

/// Geometry of a pooling window sweep over `[C, H, W]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PoolGeom {
    pub c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl PoolGeom {
    pub fn new(shape: &[usize], kernel: usize, stride: usize) -> Option<Self> {
        let [c, in_h, in_w] = *shape else { return None };
        Some(Self {
            c,
            in_h,
            in_w,
            kernel,
            stride,
            out_h: pool_out_dim(in_h, kernel, stride)?,
            out_w: pool_out_dim(in_w, kernel, stride)?,
        })
    }

    pub fn window_size(&self) -> usize {
        self.kernel * self.kernel
    }

    /// Writes the flat input indices of output window `o` into `buf`, in
    /// row-major window order.
    pub fn window(&self, o: usize, buf: &mut Vec<usize>) {
        buf.clear();
        let plane = self.out_h * self.out_w;
        let c = o / plane;
        let oy = (o % plane) / self.out_w;
        let ox = o % self.out_w;
        for ky in 0..self.kernel {
            let row = c * self.in_h * self.in_w + (oy * self.stride + ky) * self.in_w;
            for kx in 0..self.kernel {
                buf.push(row + ox * self.stride + kx);
            }
        }
    }
}

pub(crate) fn max_pool<T: Copy + Into<f64>>(g: &PoolGeom, input: &[T], out: &mut [f64]) {
    let mut win = Vec::with_capacity(g.window_size());
    for (o, slot) in out.iter_mut().enumerate() {
        g.window(o, &mut win);
        *slot = win.iter().map(|&i| input[i].into()).fold(f64::NEG_INFINITY, f64::max);
    }
}

pub(crate) fn avg_pool<T: Copy + Into<f64>>(g: &PoolGeom, input: &[T], out: &mut [f64]) {
    let mut win = Vec::with_capacity(g.window_size());
    let n = g.window_size() as f64;
    for (o, slot) in out.iter_mut().enumerate() {
        g.window(o, &mut win);
        *slot = win.iter().map(|&i| input[i].into()).sum::<f64>() / n;
    }
}
