//! Time-conditioned MLP noise predictor with hand-written reverse mode.
//!
//! ```text
//! pe   = positional_encode(t, time_pe_dim)
//! tau  = W_t2 · silu(W_t1 · pe + b_t1) + b_t2             (time MLP)
//! h_0  = W_in · x + b_in
//! for each block l:
//!     a_l     = h_l + W_l · h_l + b_l + U_l · tau         (skip + time injection)
//!     n_l     = gain_l ⊙ (a_l − mean) / sqrt(var + 1e-5) + bias_l
//!     h_{l+1} = silu(n_l)
//! eps_hat = W_out · h_depth + b_out                        (no norm)
//! ```
//!
//! All parameters live in one flat vector. The canonical order, which is also
//! the checkpoint payload order, is:
//!
//! 1. `time.w1` `[time_hidden, time_pe_dim]`, `time.b1` `[time_hidden]`,
//!    `time.w2` `[time_hidden, time_hidden]`, `time.b2` `[time_hidden]`
//! 2. `input.w` `[width, input_dim]`, `input.b` `[width]`
//! 3. for each block `l`: `block{l}.w` `[width, width]`, `block{l}.b` `[width]`,
//!    `block{l}.time_w` `[width, time_hidden]`, `block{l}.ln_gain` `[width]`,
//!    `block{l}.ln_bias` `[width]`
//! 4. `output.w` `[input_dim, width]`, `output.b` `[input_dim]`
//!
//! Matrices are row-major with shape `[out, in]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gemv, gemv_acc, gemv_t_acc, outer_acc, LatentVector, RngStream};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub input_dim: usize,
    pub depth: usize,
    pub width: usize,
    pub time_pe_dim: usize,
    pub time_hidden: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            input_dim: 64,
            depth: 10,
            width: 2048,
            time_pe_dim: 128,
            time_hidden: 256,
        }
    }
}

impl DenoiserConfig {
    /// Small default used by tests and the examples: D = 64, depth 6, width 256.
    pub fn desk() -> Self {
        DenoiserConfig {
            input_dim: 64,
            depth: 6,
            width: 256,
            ..DenoiserConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.depth == 0 || self.width == 0 || self.time_hidden == 0 {
            return Err(Error::InvalidParameter(format!(
                "denoiser dimensions must be >= 1: {self:?}"
            )));
        }
        if self.time_pe_dim == 0 || !self.time_pe_dim.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "time_pe_dim must be even and >= 2, got {}",
                self.time_pe_dim
            )));
        }
        Ok(())
    }

    /// Named tensors in canonical order.
    pub fn layout(&self) -> Vec<ParamTensor> {
        let mut out = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let len = shape.iter().product::<usize>();
            out.push(ParamTensor { name, shape, offset });
            offset += len;
        };
        let (d, w, pe, th) = (self.input_dim, self.width, self.time_pe_dim, self.time_hidden);
        push("time.w1".into(), vec![th, pe]);
        push("time.b1".into(), vec![th]);
        push("time.w2".into(), vec![th, th]);
        push("time.b2".into(), vec![th]);
        push("input.w".into(), vec![w, d]);
        push("input.b".into(), vec![w]);
        for l in 0..self.depth {
            push(format!("block{l}.w"), vec![w, w]);
            push(format!("block{l}.b"), vec![w]);
            push(format!("block{l}.time_w"), vec![w, th]);
            push(format!("block{l}.ln_gain"), vec![w]);
            push(format!("block{l}.ln_bias"), vec![w]);
        }
        push("output.w".into(), vec![d, w]);
        push("output.b".into(), vec![d]);
        out
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let (d, w, pe, th) = (self.input_dim, self.width, self.time_pe_dim, self.time_hidden);
        let time = th * pe + th + th * th + th;
        let input = w * d + w;
        let block = w * w + w + w * th + 2 * w;
        let output = d * w + d;
        time + input + self.depth * block + output
    }
}

/// One named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamTensor {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Human-readable identifier of the flat index `offset + local`.
    pub fn describe(&self, local: usize) -> String {
        match self.shape[..] {
            [_, cols] => format!("{}[{}, {}]", self.name, local / cols, local % cols),
            _ => format!("{}[{local}]", self.name),
        }
    }
}

/// Offsets of each tensor, resolved once per config.
#[derive(Debug, Clone, Copy)]
struct Offsets {
    time_w1: usize,
    time_b1: usize,
    time_w2: usize,
    time_b2: usize,
    in_w: usize,
    in_b: usize,
    blocks: usize,
    block_stride: usize,
    out_w: usize,
    out_b: usize,
}

impl Offsets {
    fn new(c: &DenoiserConfig) -> Self {
        let (d, w, pe, th) = (c.input_dim, c.width, c.time_pe_dim, c.time_hidden);
        let time_w1 = 0;
        let time_b1 = time_w1 + th * pe;
        let time_w2 = time_b1 + th;
        let time_b2 = time_w2 + th * th;
        let in_w = time_b2 + th;
        let in_b = in_w + w * d;
        let blocks = in_b + w;
        let block_stride = w * w + w + w * th + 2 * w;
        let out_w = blocks + c.depth * block_stride;
        let out_b = out_w + d * w;
        Offsets {
            time_w1,
            time_b1,
            time_w2,
            time_b2,
            in_w,
            in_b,
            blocks,
            block_stride,
            out_w,
            out_b,
        }
    }

    /// (w, b, time_w, ln_gain, ln_bias) offsets for block `l`.
    fn block(&self, l: usize, c: &DenoiserConfig) -> [usize; 5] {
        let w = c.width;
        let base = self.blocks + l * self.block_stride;
        let b = base + w * w;
        let tw = b + w;
        let g = tw + w * c.time_hidden;
        let bias = g + w;
        [base, b, tw, g, bias]
    }
}

/// Weights of the noise predictor, stored flat in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    config: DenoiserConfig,
    data: Vec<f64>,
}

/// Gradients share the parameter layout.
pub type DenoiserGrads = DenoiserParams;

impl DenoiserParams {
    pub fn zeros(config: DenoiserConfig) -> Result<Self> {
        config.validate()?;
        Ok(DenoiserParams {
            config,
            data: vec![0.0; config.param_count()],
        })
    }

    pub fn from_flat(config: DenoiserConfig, data: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if data.len() != config.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "config {config:?} needs {} parameters, got {}",
                config.param_count(),
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(DenoiserParams { config, data })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.config
            .layout()
            .into_iter()
            .find(|t| t.name == name)
            .map(|t| &self.data[t.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let t = self.config.layout().into_iter().find(|t| t.name == name)?;
        Some(&mut self.data[t.range()])
    }

    /// Identifier of a flat parameter index, e.g. `block2.w[3, 7]`.
    pub fn describe_index(&self, index: usize) -> String {
        self.config
            .layout()
            .iter()
            .find(|t| t.range().contains(&index))
            .map(|t| t.describe(index - t.offset))
            .unwrap_or_else(|| format!("<out of range {index}>"))
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Initialize weights: each weight matrix entry ~ N(0, 1/fan_in), except the
/// output layer which uses N(0, 0.01/fan_in); biases 0, layer-norm gain 1, bias 0.
pub fn init_params(config: &DenoiserConfig, rng: &mut RngStream) -> Result<DenoiserParams> {
    let mut p = DenoiserParams::zeros(*config)?;
    for t in config.layout() {
        let slice = &mut p.data[t.range()];
        if t.name.ends_with(".ln_gain") {
            slice.iter_mut().for_each(|v| *v = 1.0);
        } else if t.shape.len() == 2 {
            let fan_in = t.shape[1] as f64;
            let gain = if t.name == "output.w" { 0.1 } else { 1.0 };
            let std = gain / fan_in.sqrt();
            for v in slice.iter_mut() {
                *v = std * rng.standard_normal();
            }
        }
    }
    Ok(p)
}

/// Sinusoidal encoding: `pe[2i] = sin(t / 10000^(2i/dim))`, `pe[2i+1] = cos(...)`.
pub fn positional_encode(t: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "positional encoding dimension must be even and >= 2, got {dim}"
        )));
    }
    let mut pe = vec![0.0; dim];
    encode_into(t, &mut pe);
    Ok(pe)
}

fn encode_into(t: usize, pe: &mut [f64]) {
    let dim = pe.len();
    let t = t as f64;
    for i in 0..dim / 2 {
        let freq = 10000f64.powf(2.0 * i as f64 / dim as f64);
        let arg = t / freq;
        pe[2 * i] = arg.sin();
        pe[2 * i + 1] = arg.cos();
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Time-path activations, reusable across inputs at the same step.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeEmbedding {
    pub t: usize,
    pe: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    tau: Vec<f64>,
}

impl TimeEmbedding {
    pub fn tau(&self) -> &[f64] {
        &self.tau
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BlockTape {
    h_in: Vec<f64>,
    xhat: Vec<f64>,
    inv_std: f64,
    normed: Vec<f64>,
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    config: DenoiserConfig,
    input: Vec<f64>,
    time: TimeEmbedding,
    blocks: Vec<BlockTape>,
    h_out: Vec<f64>,
}

impl Tape {
    /// Post-norm (pre-activation) output of block `l`, for probing layer-norm behaviour.
    pub fn block_normed(&self, l: usize) -> &[f64] {
        &self.blocks[l].normed
    }

    /// `1 / sqrt(var + eps)` of block `l`'s pre-norm activations.
    pub fn block_inv_std(&self, l: usize) -> f64 {
        self.blocks[l].inv_std
    }
}

pub fn time_embedding(p: &DenoiserParams, t: usize) -> TimeEmbedding {
    let c = &p.config;
    let o = Offsets::new(c);
    let th = c.time_hidden;
    let mut pe = vec![0.0; c.time_pe_dim];
    encode_into(t, &mut pe);
    let mut z1 = p.data[o.time_b1..o.time_b1 + th].to_vec();
    gemv_acc(&p.data[o.time_w1..o.time_b1], th, c.time_pe_dim, &pe, &mut z1);
    let a1: Vec<f64> = z1.iter().map(|&z| silu(z)).collect();
    let mut tau = p.data[o.time_b2..o.time_b2 + th].to_vec();
    gemv_acc(&p.data[o.time_w2..o.time_b2], th, th, &a1, &mut tau);
    TimeEmbedding { t, pe, z1, a1, tau }
}

/// Forward pass; returns the noise estimate and the tape for backprop.
pub fn denoiser_forward(p: &DenoiserParams, d_t: &LatentVector, t: usize) -> Result<(LatentVector, Tape)> {
    let time = time_embedding(p, t);
    forward_with_time(p, d_t, time)
}

/// Forward pass reusing a precomputed time embedding.
pub fn forward_with_time(p: &DenoiserParams, d_t: &[f64], time: TimeEmbedding) -> Result<(LatentVector, Tape)> {
    let c = p.config;
    if d_t.len() != c.input_dim {
        return Err(Error::dims("denoiser input", c.input_dim, d_t.len()));
    }
    let o = Offsets::new(&c);
    let (d, w, th) = (c.input_dim, c.width, c.time_hidden);
    if let Some(i) = time.tau.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite activation in time embedding at index {i}"
        )));
    }

    let mut h = p.data[o.in_b..o.in_b + w].to_vec();
    gemv_acc(&p.data[o.in_w..o.in_b], w, d, d_t, &mut h);
    check_finite(&h, "input projection")?;

    let mut blocks = Vec::with_capacity(c.depth);
    let mut pre = vec![0.0; w];
    for l in 0..c.depth {
        let [ow, ob, otw, og, obias] = o.block(l, &c);
        // a = h + W h + b + U tau
        gemv(&p.data[ow..ob], w, w, &h, &mut pre);
        gemv_acc(&p.data[otw..og], w, th, &time.tau, &mut pre);
        for ((a, hi), bi) in pre.iter_mut().zip(&h).zip(&p.data[ob..otw]) {
            *a += hi + bi;
        }
        let mean = pre.iter().sum::<f64>() / w as f64;
        let var = pre.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / w as f64;
        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let xhat: Vec<f64> = pre.iter().map(|a| (a - mean) * inv_std).collect();
        let gain = &p.data[og..obias];
        let bias = &p.data[obias..obias + w];
        let normed: Vec<f64> = xhat
            .iter()
            .zip(gain)
            .zip(bias)
            .map(|((x, g), b)| g * x + b)
            .collect();
        let h_next: Vec<f64> = normed.iter().map(|&n| silu(n)).collect();
        if !inv_std.is_finite() {
            return Err(Error::Numerical(format!("non-finite activation in block {l}")));
        }
        check_finite(&h_next, &format!("block {l}"))?;
        blocks.push(BlockTape {
            h_in: std::mem::replace(&mut h, h_next),
            xhat,
            inv_std,
            normed,
        });
    }

    let mut out = p.data[o.out_b..o.out_b + d].to_vec();
    gemv_acc(&p.data[o.out_w..o.out_b], d, w, &h, &mut out);
    check_finite(&out, "output layer")?;

    let tape = Tape {
        config: c,
        input: d_t.to_vec(),
        time,
        blocks,
        h_out: h,
    };
    Ok((LatentVector::from_vec_unchecked(out), tape))
}

/// Forward pass without keeping a tape; used by sampling.
pub fn predict_noise(p: &DenoiserParams, d_t: &[f64], time: &TimeEmbedding) -> Result<Vec<f64>> {
    let c = p.config;
    if d_t.len() != c.input_dim {
        return Err(Error::dims("denoiser input", c.input_dim, d_t.len()));
    }
    let o = Offsets::new(&c);
    let (d, w, th) = (c.input_dim, c.width, c.time_hidden);
    let mut h = p.data[o.in_b..o.in_b + w].to_vec();
    gemv_acc(&p.data[o.in_w..o.in_b], w, d, d_t, &mut h);
    let mut pre = vec![0.0; w];
    for l in 0..c.depth {
        let [ow, ob, otw, og, obias] = o.block(l, &c);
        gemv(&p.data[ow..ob], w, w, &h, &mut pre);
        gemv_acc(&p.data[otw..og], w, th, &time.tau, &mut pre);
        for ((a, hi), bi) in pre.iter_mut().zip(&h).zip(&p.data[ob..otw]) {
            *a += hi + bi;
        }
        let mean = pre.iter().sum::<f64>() / w as f64;
        let var = pre.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / w as f64;
        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for (i, hi) in h.iter_mut().enumerate() {
            let n = p.data[og + i] * (pre[i] - mean) * inv_std + p.data[obias + i];
            *hi = silu(n);
        }
    }
    let mut out = p.data[o.out_b..o.out_b + d].to_vec();
    gemv_acc(&p.data[o.out_w..o.out_b], d, w, &h, &mut out);
    check_finite(&out, "output layer")?;
    Ok(out)
}

fn check_finite(v: &[f64], layer: &str) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite activation in {layer} at index {i}"
        )));
    }
    Ok(())
}

/// Deliberate corruption of one backward rule, for testing the gradient checker.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackwardFault {
    /// Negate the weight gradient of the given block.
    FlipBlockWeightSign(usize),
}

/// Reverse-mode gradients for one forward evaluation.
pub fn denoiser_backward(p: &DenoiserParams, tape: &Tape, grad_eps_hat: &[f64]) -> Result<DenoiserGrads> {
    let mut grads = DenoiserParams::zeros(p.config)?;
    backward_accumulate(p, tape, grad_eps_hat, &mut grads, None)?;
    Ok(grads)
}

/// Adds this evaluation's gradients into `grads`.
pub fn backward_accumulate(
    p: &DenoiserParams,
    tape: &Tape,
    grad_eps_hat: &[f64],
    grads: &mut DenoiserGrads,
    fault: Option<BackwardFault>,
) -> Result<()> {
    let c = p.config;
    if tape.config != c || grads.config != c {
        return Err(Error::ShapeMismatch(format!(
            "tape/gradient config {:?} does not match params {:?}",
            tape.config, c
        )));
    }
    if grad_eps_hat.len() != c.input_dim {
        return Err(Error::dims("output gradient", c.input_dim, grad_eps_hat.len()));
    }
    let o = Offsets::new(&c);
    let (d, w, th) = (c.input_dim, c.width, c.time_hidden);
    let g = &mut grads.data;

    // output layer
    outer_acc(grad_eps_hat, &tape.h_out, &mut g[o.out_w..o.out_b]);
    for (gb, ge) in g[o.out_b..o.out_b + d].iter_mut().zip(grad_eps_hat) {
        *gb += ge;
    }
    let mut gh = vec![0.0; w];
    gemv_t_acc(&p.data[o.out_w..o.out_b], d, w, grad_eps_hat, &mut gh);

    let mut gtau = vec![0.0; th];
    let mut gpre = vec![0.0; w];
    for l in (0..c.depth).rev() {
        let bt = &tape.blocks[l];
        let [ow, ob, otw, og, obias] = o.block(l, &c);
        // through silu
        let gn: Vec<f64> = gh
            .iter()
            .zip(&bt.normed)
            .map(|(g, &n)| g * silu_grad(n))
            .collect();
        // layer-norm affine
        for i in 0..w {
            g[og + i] += gn[i] * bt.xhat[i];
            g[obias + i] += gn[i];
        }
        // normalization
        let gxhat: Vec<f64> = gn.iter().zip(&p.data[og..obias]).map(|(a, b)| a * b).collect();
        let mean_g = gxhat.iter().sum::<f64>() / w as f64;
        let mean_gx = gxhat.iter().zip(&bt.xhat).map(|(a, b)| a * b).sum::<f64>() / w as f64;
        for i in 0..w {
            gpre[i] = bt.inv_std * (gxhat[i] - mean_g - bt.xhat[i] * mean_gx);
        }
        // a = h + W h + b + U tau
        if fault == Some(BackwardFault::FlipBlockWeightSign(l)) {
            let neg: Vec<f64> = gpre.iter().map(|v| -v).collect();
            outer_acc(&neg, &bt.h_in, &mut g[ow..ob]);
        } else {
            outer_acc(&gpre, &bt.h_in, &mut g[ow..ob]);
        }
        for (gb, gp) in g[ob..otw].iter_mut().zip(&gpre) {
            *gb += gp;
        }
        outer_acc(&gpre, &tape.time.tau, &mut g[otw..og]);
        gemv_t_acc(&p.data[otw..og], w, th, &gpre, &mut gtau);
        gh.copy_from_slice(&gpre);
        gemv_t_acc(&p.data[ow..ob], w, w, &gpre, &mut gh);
    }

    // input projection
    outer_acc(&gh, &tape.input, &mut g[o.in_w..o.in_b]);
    for (gb, v) in g[o.in_b..o.in_b + w].iter_mut().zip(&gh) {
        *gb += v;
    }

    // time MLP
    let time = &tape.time;
    outer_acc(&gtau, &time.a1, &mut g[o.time_w2..o.time_b2]);
    for (gb, v) in g[o.time_b2..o.time_b2 + th].iter_mut().zip(&gtau) {
        *gb += v;
    }
    let mut ga1 = vec![0.0; th];
    gemv_t_acc(&p.data[o.time_w2..o.time_b2], th, th, &gtau, &mut ga1);
    let gz1: Vec<f64> = ga1.iter().zip(&time.z1).map(|(g, &z)| g * silu_grad(z)).collect();
    outer_acc(&gz1, &time.pe, &mut g[o.time_w1..o.time_b1]);
    for (gb, v) in g[o.time_b1..o.time_b1 + th].iter_mut().zip(&gz1) {
        *gb += v;
    }
    Ok(())
}
