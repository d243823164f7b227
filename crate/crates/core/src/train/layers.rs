//! Differentiable layers with hand-written reverse-mode backward passes.
//!
//! Activations are `(channels, length)` row-major `f32` buffers. Every
//! accumulation runs sequentially in a fixed index order; nothing scatters
//! through atomics, so gradients are bitwise reproducible.

use crate::error::{Error, Result};

/// Row-major `(channels, len)` activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f32>,
}

impl Signal {
    pub fn new(channels: usize, len: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * len {
            return Err(Error::Dimension(format!(
                "signal {channels}x{len} needs {} values, got {}",
                channels * len,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            len,
            data,
        })
    }

    pub fn zeros(channels: usize, len: usize) -> Self {
        Self {
            channels,
            len,
            data: vec![0.0; channels * len],
        }
    }

    pub fn vector(data: Vec<f32>) -> Self {
        Self {
            channels: data.len(),
            len: 1,
            data,
        }
    }

    pub fn norm(&self) -> f32 {
        let mut acc = 0.0f32;
        for v in &self.data {
            acc += v * v;
        }
        acc.sqrt()
    }
}

/// 1-D convolution with zero padding `kernel / 2` and stride 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1d {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv1d {
    pub fn new(c_in: usize, c_out: usize, kernel: usize, stride: usize) -> Result<Self> {
        if stride != 1 && stride != 2 {
            return Err(Error::Spec(format!("unsupported stride {stride}")));
        }
        if c_in == 0 || c_out == 0 || kernel == 0 {
            return Err(Error::Spec("conv1d extents must be nonzero".into()));
        }
        Ok(Self {
            c_in,
            c_out,
            kernel,
            stride,
        })
    }

    pub fn padding(&self) -> usize {
        self.kernel / 2
    }

    pub fn out_len(&self, len: usize) -> usize {
        (len + 2 * self.padding() - self.kernel) / self.stride + 1
    }

    fn check(&self, x: &Signal) -> Result<()> {
        if x.channels != self.c_in {
            return Err(Error::Dimension(format!(
                "conv1d expects {} input channels, got {}",
                self.c_in, x.channels
            )));
        }
        if x.len + 2 * self.padding() < self.kernel {
            return Err(Error::Dimension("input shorter than kernel".into()));
        }
        Ok(())
    }

    /// Output positions `t` whose tap `k` reads inside a signal of length `len`.
    fn valid_outputs(&self, k: usize, len: usize, out_len: usize) -> std::ops::Range<usize> {
        let pad = self.padding();
        let lo = pad.saturating_sub(k).div_ceil(self.stride);
        let hi = if len + pad > k {
            ((len - 1 + pad - k) / self.stride + 1).min(out_len)
        } else {
            0
        };
        lo..hi.max(lo)
    }

    /// Each output sums its taps in ascending `(c, k)` order, then adds the bias.
    pub fn forward(&self, weight: &[f32], bias: &[f32], x: &Signal) -> Result<Signal> {
        self.check(x)?;
        let out_len = self.out_len(x.len);
        let pad = self.padding();
        let s = self.stride;
        let mut y = Signal::zeros(self.c_out, out_len);
        for o in 0..self.c_out {
            let yo = &mut y.data[o * out_len..][..out_len];
            for c in 0..self.c_in {
                let w = &weight[(o * self.c_in + c) * self.kernel..][..self.kernel];
                let row = &x.data[c * x.len..][..x.len];
                for (k, &wk) in w.iter().enumerate() {
                    let ts = self.valid_outputs(k, x.len, out_len);
                    if ts.is_empty() {
                        continue;
                    }
                    let p0 = ts.start * s + k - pad;
                    if s == 1 {
                        for (yt, &xv) in yo[ts.clone()].iter_mut().zip(&row[p0..]) {
                            *yt += wk * xv;
                        }
                    } else {
                        for (yt, &xv) in yo[ts].iter_mut().zip(row[p0..].iter().step_by(s)) {
                            *yt += wk * xv;
                        }
                    }
                }
            }
            for yt in yo.iter_mut() {
                *yt += bias[o];
            }
        }
        Ok(y)
    }

    /// Accumulates into `grad_w`/`grad_b` and returns the input gradient.
    /// Output channels, input channels, taps and positions are visited in
    /// ascending order, so every sum has a fixed sequence.
    pub fn backward(&self, weight: &[f32], x: &Signal, grad_y: &Signal, grad_w: &mut [f32], grad_b: &mut [f32]) -> Signal {
        let out_len = grad_y.len;
        let pad = self.padding();
        let s = self.stride;
        let mut grad_x = Signal::zeros(self.c_in, x.len);
        for o in 0..self.c_out {
            let gy = &grad_y.data[o * out_len..][..out_len];
            let mut gb = 0.0f32;
            for &g in gy {
                gb += g;
            }
            grad_b[o] += gb;
            for c in 0..self.c_in {
                let row = &x.data[c * x.len..][..x.len];
                let base = (o * self.c_in + c) * self.kernel;
                let gx = &mut grad_x.data[c * x.len..][..x.len];
                for k in 0..self.kernel {
                    let ts = self.valid_outputs(k, x.len, out_len);
                    if ts.is_empty() {
                        continue;
                    }
                    let p0 = ts.start * s + k - pad;
                    let wk = weight[base + k];
                    let mut gw = 0.0f32;
                    if s == 1 {
                        for (&g, &xv) in gy[ts.clone()].iter().zip(&row[p0..]) {
                            gw += g * xv;
                        }
                        for (&g, gxv) in gy[ts].iter().zip(&mut gx[p0..]) {
                            *gxv += wk * g;
                        }
                    } else {
                        for (&g, &xv) in gy[ts.clone()].iter().zip(row[p0..].iter().step_by(s)) {
                            gw += g * xv;
                        }
                        for (&g, gxv) in gy[ts].iter().zip(gx[p0..].iter_mut().step_by(s)) {
                            *gxv += wk * g;
                        }
                    }
                    grad_w[base + k] += gw;
                }
            }
        }
        grad_x
    }
}

/// Dense layer `y = W x + b` with `W` of shape `(out, in)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn forward(&self, weight: &[f32], bias: &[f32], x: &[f32]) -> Result<Vec<f32>> {
        if x.len() != self.inputs {
            return Err(Error::Dimension(format!(
                "linear expects {} inputs, got {}",
                self.inputs,
                x.len()
            )));
        }
        Ok((0..self.outputs)
            .map(|o| {
                let mut acc = 0.0f32;
                for (w, v) in weight[o * self.inputs..][..self.inputs].iter().zip(x) {
                    acc += w * v;
                }
                acc + bias[o]
            })
            .collect())
    }

    pub fn backward(&self, weight: &[f32], x: &[f32], grad_y: &[f32], grad_w: &mut [f32], grad_b: &mut [f32]) -> Vec<f32> {
        for (o, &g) in grad_y.iter().enumerate() {
            grad_b[o] += g;
            for (gw, v) in grad_w[o * self.inputs..][..self.inputs].iter_mut().zip(x) {
                *gw += g * v;
            }
        }
        (0..self.inputs)
            .map(|i| {
                let mut acc = 0.0f32;
                for (o, &g) in grad_y.iter().enumerate() {
                    acc += weight[o * self.inputs + i] * g;
                }
                acc
            })
            .collect()
    }
}

const GELU_C: f32 = 0.797_884_6; // sqrt(2 / pi)
const GELU_A: f32 = 0.044_715;

/// `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
pub fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f32) -> f32 {
    let inner = GELU_C * (x + GELU_A * x * x * x);
    let t = inner.tanh();
    let d_inner = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
}

pub fn gelu_forward(x: &Signal) -> Signal {
    Signal {
        data: x.data.iter().map(|&v| gelu(v)).collect(),
        ..*x
    }
}

pub fn gelu_backward(x: &Signal, grad_y: &Signal) -> Signal {
    Signal {
        data: x
            .data
            .iter()
            .zip(&grad_y.data)
            .map(|(&v, &g)| g * gelu_grad(v))
            .collect(),
        ..*x
    }
}

/// Window `[start, end)` of output `i` when pooling `len` samples to `out_len`.
pub fn pool_window(i: usize, len: usize, out_len: usize) -> (usize, usize) {
    let start = i * len / out_len;
    let end = ((i + 1) * len).div_ceil(out_len);
    (start, end)
}

/// Adaptive average pooling along the length axis.
pub fn adaptive_avg_pool_forward(x: &Signal, out_len: usize) -> Result<Signal> {
    if out_len == 0 || out_len > x.len {
        return Err(Error::Dimension(format!(
            "cannot pool length {} to {out_len}",
            x.len
        )));
    }
    let mut y = Signal::zeros(x.channels, out_len);
    for c in 0..x.channels {
        let row = &x.data[c * x.len..][..x.len];
        for i in 0..out_len {
            let (s, e) = pool_window(i, x.len, out_len);
            let mut acc = 0.0f32;
            for &v in &row[s..e] {
                acc += v;
            }
            y.data[c * out_len + i] = acc / (e - s) as f32;
        }
    }
    Ok(y)
}

/// Explicit per-window loop: each output gradient is split uniformly over its
/// window, windows visited in ascending order.
pub fn adaptive_avg_pool_backward(in_len: usize, grad_y: &Signal) -> Signal {
    let out_len = grad_y.len;
    let mut gx = Signal::zeros(grad_y.channels, in_len);
    for c in 0..grad_y.channels {
        for i in 0..out_len {
            let (s, e) = pool_window(i, in_len, out_len);
            let share = grad_y.data[c * out_len + i] / (e - s) as f32;
            for p in s..e {
                gx.data[c * in_len + p] += share;
            }
        }
    }
    gx
}

/// Per-channel mean followed by per-channel max: output length `2 * channels`.
/// The max gradient goes to the first position attaining the maximum.
pub fn global_avg_max_forward(x: &Signal) -> (Vec<f32>, Vec<usize>) {
    let mut out = vec![0.0f32; 2 * x.channels];
    let mut argmax = Vec::with_capacity(x.channels);
    for c in 0..x.channels {
        let row = &x.data[c * x.len..][..x.len];
        let mut acc = 0.0f32;
        let mut best = 0;
        for (p, &v) in row.iter().enumerate() {
            acc += v;
            if v > row[best] {
                best = p;
            }
        }
        out[c] = acc / x.len as f32;
        out[x.channels + c] = row[best];
        argmax.push(best);
    }
    (out, argmax)
}

pub fn global_avg_max_backward(channels: usize, len: usize, argmax: &[usize], grad_y: &[f32]) -> Signal {
    let mut gx = Signal::zeros(channels, len);
    for c in 0..channels {
        let share = grad_y[c] / len as f32;
        for p in 0..len {
            gx.data[c * len + p] = share;
        }
        gx.data[c * len + argmax[c]] += grad_y[channels + c];
    }
    gx
}

/// `y = skip(x) + conv_b(gelu(conv_a(x)))`, where `skip` is the identity or,
/// when `conv_a` has stride 2, adaptive average pooling to the branch length.
/// `conv_b` carries the fixup-scaled weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResidualBlock {
    pub conv_a: Conv1d,
    pub conv_b: Conv1d,
}

#[derive(Debug, Clone)]
pub struct ResidualTrace {
    input: Signal,
    pre_act: Signal,
    act: Signal,
}

/// Weights and biases for a residual block.
#[derive(Debug, Clone, Copy)]
pub struct ResidualParams<'a> {
    pub weight_a: &'a [f32],
    pub bias_a: &'a [f32],
    pub weight_b: &'a [f32],
    pub bias_b: &'a [f32],
}

/// Gradient buffers matching [`ResidualParams`].
#[derive(Debug)]
pub struct ResidualGrads<'a> {
    pub weight_a: &'a mut [f32],
    pub bias_a: &'a mut [f32],
    pub weight_b: &'a mut [f32],
    pub bias_b: &'a mut [f32],
}

impl ResidualBlock {
    pub fn new(width: usize, kernel: usize, stride: usize) -> Result<Self> {
        Ok(Self {
            conv_a: Conv1d::new(width, width, kernel, stride)?,
            conv_b: Conv1d::new(width, width, kernel, 1)?,
        })
    }

    pub fn forward(&self, p: ResidualParams<'_>, x: &Signal) -> Result<(Signal, ResidualTrace)> {
        let pre_act = self.conv_a.forward(p.weight_a, p.bias_a, x)?;
        let act = gelu_forward(&pre_act);
        let mut y = self.conv_b.forward(p.weight_b, p.bias_b, &act)?;
        let skip = if self.conv_a.stride == 1 {
            x.clone()
        } else {
            adaptive_avg_pool_forward(x, y.len)?
        };
        for (v, s) in y.data.iter_mut().zip(&skip.data) {
            *v += s;
        }
        Ok((
            y,
            ResidualTrace {
                input: x.clone(),
                pre_act,
                act,
            },
        ))
    }

    pub fn backward(&self, p: ResidualParams<'_>, trace: &ResidualTrace, grad_y: &Signal, g: ResidualGrads<'_>) -> Signal {
        let g_act = self
            .conv_b
            .backward(p.weight_b, &trace.act, grad_y, g.weight_b, g.bias_b);
        let g_pre = gelu_backward(&trace.pre_act, &g_act);
        let mut gx = self
            .conv_a
            .backward(p.weight_a, &trace.input, &g_pre, g.weight_a, g.bias_a);
        let g_skip = if self.conv_a.stride == 1 {
            grad_y.clone()
        } else {
            adaptive_avg_pool_backward(trace.input.len, grad_y)
        };
        for (v, s) in gx.data.iter_mut().zip(&g_skip.data) {
            *v += s;
        }
        gx
    }
}

/// A single differentiable layer, for standalone forward/backward checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Conv1d(Conv1d),
    Linear(Linear),
    Gelu,
    AdaptiveAvgPool { out_len: usize },
    GlobalAvgMaxPool,
    Residual(ResidualBlock),
}

/// Output, input gradient and parameter gradients of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPass {
    pub output: Signal,
    pub input_grad: Signal,
    pub param_grads: Vec<Vec<f32>>,
}

impl Layer {
    /// Parameter tensor lengths in the order `layer_forward_backward` expects.
    pub fn param_sizes(&self) -> Vec<usize> {
        match self {
            Layer::Conv1d(c) => vec![c.c_out * c.c_in * c.kernel, c.c_out],
            Layer::Linear(l) => vec![l.outputs * l.inputs, l.outputs],
            Layer::Residual(b) => {
                let a = b.conv_a;
                let bb = b.conv_b;
                vec![a.c_out * a.c_in * a.kernel, a.c_out, bb.c_out * bb.c_in * bb.kernel, bb.c_out]
            }
            _ => Vec::new(),
        }
    }

    pub fn forward(&self, params: &[&[f32]], input: &Signal) -> Result<Signal> {
        self.check_params(params)?;
        Ok(match *self {
            Layer::Conv1d(c) => c.forward(params[0], params[1], input)?,
            Layer::Linear(l) => Signal::vector(l.forward(params[0], params[1], &input.data)?),
            Layer::Gelu => gelu_forward(input),
            Layer::AdaptiveAvgPool { out_len } => adaptive_avg_pool_forward(input, out_len)?,
            Layer::GlobalAvgMaxPool => Signal::vector(global_avg_max_forward(input).0),
            Layer::Residual(b) => b.forward(residual_params(params), input)?.0,
        })
    }

    fn check_params(&self, params: &[&[f32]]) -> Result<()> {
        let sizes = self.param_sizes();
        if params.len() != sizes.len() || params.iter().zip(&sizes).any(|(p, &s)| p.len() != s) {
            return Err(Error::Dimension(format!(
                "layer expects parameter sizes {sizes:?}"
            )));
        }
        Ok(())
    }
}

fn residual_params<'a>(params: &[&'a [f32]]) -> ResidualParams<'a> {
    ResidualParams {
        weight_a: params[0],
        bias_a: params[1],
        weight_b: params[2],
        bias_b: params[3],
    }
}

/// Runs one layer forward, then backward from `upstream_grad`.
pub fn layer_forward_backward(layer: &Layer, params: &[&[f32]], input: &Signal, upstream_grad: &Signal) -> Result<LayerPass> {
    layer.check_params(params)?;
    let mut grads: Vec<Vec<f32>> = layer.param_sizes().into_iter().map(|n| vec![0.0; n]).collect();
    let (output, input_grad) = match *layer {
        Layer::Conv1d(c) => {
            let y = c.forward(params[0], params[1], input)?;
            check_upstream(&y, upstream_grad)?;
            let (gw, gb) = grads.split_at_mut(1);
            let gx = c.backward(params[0], input, upstream_grad, &mut gw[0], &mut gb[0]);
            (y, gx)
        }
        Layer::Linear(l) => {
            let y = Signal::vector(l.forward(params[0], params[1], &input.data)?);
            check_upstream(&y, upstream_grad)?;
            let (gw, gb) = grads.split_at_mut(1);
            let gx = l.backward(params[0], &input.data, &upstream_grad.data, &mut gw[0], &mut gb[0]);
            (y, Signal { data: gx, ..*input })
        }
        Layer::Gelu => {
            let y = gelu_forward(input);
            check_upstream(&y, upstream_grad)?;
            (y, gelu_backward(input, upstream_grad))
        }
        Layer::AdaptiveAvgPool { out_len } => {
            let y = adaptive_avg_pool_forward(input, out_len)?;
            check_upstream(&y, upstream_grad)?;
            (y, adaptive_avg_pool_backward(input.len, upstream_grad))
        }
        Layer::GlobalAvgMaxPool => {
            let (v, argmax) = global_avg_max_forward(input);
            let y = Signal::vector(v);
            check_upstream(&y, upstream_grad)?;
            let gx = global_avg_max_backward(input.channels, input.len, &argmax, &upstream_grad.data);
            (y, gx)
        }
        Layer::Residual(b) => {
            let p = residual_params(params);
            let (y, trace) = b.forward(p, input)?;
            check_upstream(&y, upstream_grad)?;
            let [wa, ba, wb, bb] = &mut grads[..] else {
                unreachable!("residual has four parameter tensors")
            };
            let g = ResidualGrads {
                weight_a: wa,
                bias_a: ba,
                weight_b: wb,
                bias_b: bb,
            };
            let gx = b.backward(p, &trace, upstream_grad, g);
            (y, gx)
        }
    };
    Ok(LayerPass {
        output,
        input_grad,
        param_grads: grads,
    })
}

fn check_upstream(y: &Signal, g: &Signal) -> Result<()> {
    if y.data.len() != g.data.len() {
        return Err(Error::Dimension(format!(
            "upstream gradient has {} values, output has {}",
            g.data.len(),
            y.data.len()
        )));
    }
    Ok(())
}
