//! Forward and backward kernels for each layer kind.
//!
//! Activations are `[batch, channels, height, width]` row-major buffers;
//! dense layers see `[batch, features, 1, 1]`.

use super::{gemm, MatRef, Real};
use crate::error::{Error, Result};

/// One layer of a [`super::ModelSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// Stride-1 square convolution.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        bias: bool,
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
    /// 2x2 max pooling with stride 2 (floor).
    MaxPool2,
    Flatten,
    Linear {
        inputs: usize,
        outputs: usize,
        bias: bool,
    },
    LogSoftmax,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv2d { .. } => "conv",
            LayerKind::BatchNorm { .. } => "batchnorm",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool2 => "maxpool",
            LayerKind::Flatten => "flatten",
            LayerKind::Linear { .. } => "linear",
            LayerKind::LogSoftmax => "log-softmax",
        }
    }

    pub fn param_len(&self) -> usize {
        match *self {
            LayerKind::Conv2d { in_channels, out_channels, kernel, bias, .. } => {
                out_channels * in_channels * kernel * kernel + if bias { out_channels } else { 0 }
            }
            LayerKind::BatchNorm { channels } => 2 * channels,
            LayerKind::Linear { inputs, outputs, bias } => {
                inputs * outputs + if bias { outputs } else { 0 }
            }
            _ => 0,
        }
    }

    /// Running statistics owned by the layer (batch norm mean and variance).
    pub fn stat_len(&self) -> usize {
        match *self {
            LayerKind::BatchNorm { channels } => 2 * channels,
            _ => 0,
        }
    }

    /// Fan-in used for weight initialization.
    pub fn fan_in(&self) -> usize {
        match *self {
            LayerKind::Conv2d { in_channels, kernel, .. } => in_channels * kernel * kernel,
            LayerKind::Linear { inputs, .. } => inputs,
            _ => 0,
        }
    }

    pub fn output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let [c, h, w] = input;
        let mismatch = |what: &str| {
            Err(Error::config(format!(
                "{} layer cannot take input {c}x{h}x{w}: {what}",
                self.name()
            )))
        };
        match *self {
            LayerKind::Conv2d { in_channels, out_channels, kernel, padding, .. } => {
                if c != in_channels {
                    return mismatch("channel count differs");
                }
                if h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return mismatch("kernel larger than padded input");
                }
                Ok([out_channels, h + 2 * padding - kernel + 1, w + 2 * padding - kernel + 1])
            }
            LayerKind::BatchNorm { channels } => {
                if c != channels {
                    return mismatch("channel count differs");
                }
                Ok(input)
            }
            LayerKind::Relu | LayerKind::LogSoftmax => Ok(input),
            LayerKind::MaxPool2 => {
                if h < 2 || w < 2 {
                    return mismatch("spatial size below 2");
                }
                Ok([c, h / 2, w / 2])
            }
            LayerKind::Flatten => Ok([c * h * w, 1, 1]),
            LayerKind::Linear { inputs, outputs, .. } => {
                if h != 1 || w != 1 || c != inputs {
                    return mismatch("expects a flat vector of matching width");
                }
                Ok([outputs, 1, 1])
            }
        }
    }
}

/// Geometry of a stride-1 convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub out_c: usize,
    pub k: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(input: [usize; 3], out_c: usize, k: usize, pad: usize) -> Self {
        let [c, h, w] = input;
        Self { c, h, w, out_c, k, pad, ho: h + 2 * pad - k + 1, wo: w + 2 * pad - k + 1 }
    }

    fn patch(&self) -> usize {
        self.c * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col<T: Real>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let p = g.positions();
    for ch in 0..g.c {
        let plane = &x[ch * g.h * g.w..(ch + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ch * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = oy as isize + ki as isize - g.pad as isize;
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = ox as isize + kj as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let p = g.positions();
    for ch in 0..g.c {
        let plane = &mut dx[ch * g.h * g.w..(ch + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ch * g.k + ki) * g.k + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = oy as isize + ki as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let line = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = ox as isize + kj as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            line[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Output `[batch, out_c, ho, wo]`.
pub(crate) fn conv_forward<T: Real>(
    x: &[T],
    batch: usize,
    g: &ConvGeom,
    weight: &[T],
    bias: Option<&[T]>,
) -> Vec<T> {
    let (kk, p) = (g.patch(), g.positions());
    let in_len = g.c * g.h * g.w;
    let out_len = g.out_c * p;
    let mut out = vec![T::zero(); batch * out_len];
    let mut cols = vec![T::zero(); kk * p];
    for b in 0..batch {
        im2col(&x[b * in_len..(b + 1) * in_len], g, &mut cols);
        let y = &mut out[b * out_len..(b + 1) * out_len];
        let beta = match bias {
            Some(bias) => {
                for (o, row) in y.chunks_mut(p).enumerate() {
                    row.fill(bias[o]);
                }
                T::one()
            }
            None => T::zero(),
        };
        gemm(MatRef::new(weight, g.out_c, kk), MatRef::new(&cols, kk, p), beta, y);
    }
    out
}

/// Accumulates weight/bias gradients into `dparams` (weights then bias) and
/// returns the input gradient when requested.
pub(crate) fn conv_backward<T: Real>(
    x: &[T],
    dy: &[T],
    batch: usize,
    g: &ConvGeom,
    weight: &[T],
    mut dparams: Option<&mut [T]>,
    want_input: bool,
) -> Option<Vec<T>> {
    let (kk, p) = (g.patch(), g.positions());
    let in_len = g.c * g.h * g.w;
    let out_len = g.out_c * p;
    let mut cols = vec![T::zero(); kk * p];
    let mut dcols = vec![T::zero(); kk * p];
    let mut dx = want_input.then(|| vec![T::zero(); batch * in_len]);
    for b in 0..batch {
        let dyb = &dy[b * out_len..(b + 1) * out_len];
        if let Some(dp) = dparams.as_deref_mut() {
            im2col(&x[b * in_len..(b + 1) * in_len], g, &mut cols);
            let (dw, db) = dp.split_at_mut(g.out_c * kk);
            gemm(MatRef::new(dyb, g.out_c, p), MatRef::new(&cols, kk, p).t(), T::one(), dw);
            if !db.is_empty() {
                for (o, row) in dyb.chunks(p).enumerate() {
                    db[o] += row.iter().copied().sum::<T>();
                }
            }
        }
        if let Some(dx) = dx.as_mut() {
            gemm(MatRef::new(weight, g.out_c, kk).t(), MatRef::new(dyb, g.out_c, p), T::zero(), &mut dcols);
            col2im(&dcols, g, &mut dx[b * in_len..(b + 1) * in_len]);
        }
    }
    dx
}

/// `y[batch, outputs] = x[batch, inputs] * W^T + b`.
pub(crate) fn linear_forward<T: Real>(
    x: &[T],
    batch: usize,
    inputs: usize,
    outputs: usize,
    weight: &[T],
    bias: Option<&[T]>,
) -> Vec<T> {
    let mut y = vec![T::zero(); batch * outputs];
    let beta = match bias {
        Some(bias) => {
            for row in y.chunks_mut(outputs) {
                row.copy_from_slice(bias);
            }
            T::one()
        }
        None => T::zero(),
    };
    gemm(MatRef::new(x, batch, inputs), MatRef::new(weight, outputs, inputs).t(), beta, &mut y);
    y
}

pub(crate) fn linear_backward<T: Real>(
    x: &[T],
    dy: &[T],
    batch: usize,
    inputs: usize,
    outputs: usize,
    weight: &[T],
    dparams: Option<&mut [T]>,
    want_input: bool,
) -> Option<Vec<T>> {
    if let Some(dp) = dparams {
        let (dw, db) = dp.split_at_mut(outputs * inputs);
        gemm(MatRef::new(dy, batch, outputs).t(), MatRef::new(x, batch, inputs), T::one(), dw);
        if !db.is_empty() {
            for row in dy.chunks(outputs) {
                for (d, &v) in db.iter_mut().zip(row) {
                    *d += v;
                }
            }
        }
    }
    want_input.then(|| {
        let mut dx = vec![T::zero(); batch * inputs];
        gemm(MatRef::new(dy, batch, outputs), MatRef::new(weight, outputs, inputs), T::zero(), &mut dx);
        dx
    })
}

pub(crate) fn relu_forward<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect()
}

/// Uses the layer output: the gradient passes where the output is positive.
pub(crate) fn relu_backward<T: Real>(y: &[T], dy: &[T]) -> Vec<T> {
    y.iter()
        .zip(dy)
        .map(|(&y, &d)| if y > T::zero() { d } else { T::zero() })
        .collect()
}

/// Returns the pooled output and, per output element, the flat input index
/// of the selected maximum (first one wins on ties).
pub(crate) fn maxpool_forward<T: Real>(x: &[T], batch: usize, dims: [usize; 3]) -> (Vec<T>, Vec<u32>) {
    let [c, h, w] = dims;
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(batch * c * ho * wo);
    let mut arg = Vec::with_capacity(batch * c * ho * wo);
    for plane in 0..batch * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool_backward<T: Real>(dy: &[T], arg: &[u32], input_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); input_len];
    for (&d, &i) in dy.iter().zip(arg) {
        dx[i as usize] += d;
    }
    dx
}

pub(crate) fn log_softmax_forward<T: Real>(x: &[T], classes: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(classes) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        out.extend(row.iter().map(|&v| v - lse));
    }
    out
}

/// `dx = dy - softmax * sum(dy)` per row, with `y` the log-probabilities.
pub(crate) fn log_softmax_backward<T: Real>(y: &[T], dy: &[T], classes: usize) -> Vec<T> {
    let mut dx = Vec::with_capacity(y.len());
    for (yr, dr) in y.chunks(classes).zip(dy.chunks(classes)) {
        let total: T = dr.iter().copied().sum();
        dx.extend(yr.iter().zip(dr).map(|(&l, &d)| d - l.exp() * total));
    }
    dx
}
