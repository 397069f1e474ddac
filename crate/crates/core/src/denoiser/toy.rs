//! A small trainable ε-network for desk-scale experiments.
//!
//! Three 3×3 convolutions (zero padded) with SiLU activations. A sinusoidal
//! embedding of `t` is projected into per-channel biases of the two hidden layers
//! and into a scalar skip gain applied to the input:
//!
//! ```text
//! h1  = silu(conv(x)  + b1 + P1·e(t))
//! h2  = silu(conv(h1) + b2 + P2·e(t))
//! eps = conv(h2) + b3 + (ws·e(t) + bs)·x
//! ```
//!
//! Gradients are hand-derived; `tests::gradient_matches_finite_differences` checks
//! them against central differences.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Denoiser, EpsilonPrediction, VarianceMode};
use crate::error::{Error, Result};
use crate::noise::GaussianNoiseSource;
use crate::schedule::Schedule;
use crate::tensor::{Shape, Tensor};

pub const WEIGHTS_MAGIC: [u8; 8] = *b"TOYDENOI";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: ArchitectureKind,
    pub hidden: usize,
    pub embed_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchitectureKind {
    Conv3SiluSinusoidal,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture { kind: ArchitectureKind::Conv3SiluSinusoidal, hidden: 16, embed_dim: 16 }
    }
}

/// JSON header embedded in the weights file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsHeader {
    pub architecture: Architecture,
    #[serde(rename = "T")]
    pub steps: usize,
    pub shape: Shape,
    pub seed: u64,
    pub variance: VarianceMode,
    pub param_count: usize,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    c: usize,
    hd: usize,
    e: usize,
    w1: usize,
    b1: usize,
    p1: usize,
    w2: usize,
    b2: usize,
    p2: usize,
    w3: usize,
    b3: usize,
    ws: usize,
    bs: usize,
    len: usize,
}

impl Layout {
    fn new(channels: usize, arch: &Architecture) -> Self {
        let (c, hd, e) = (channels, arch.hidden, arch.embed_dim);
        let w1 = 0;
        let b1 = w1 + hd * c * 9;
        let p1 = b1 + hd;
        let w2 = p1 + hd * e;
        let b2 = w2 + hd * hd * 9;
        let p2 = b2 + hd;
        let w3 = p2 + hd * e;
        let b3 = w3 + c * hd * 9;
        let ws = b3 + c;
        let bs = ws + e;
        let len = bs + 1;
        Layout { c, hd, e, w1, b1, p1, w2, b2, p2, w3, b3, ws, bs, len }
    }
}

#[derive(Debug, Clone)]
pub struct ToyDenoiser {
    header: WeightsHeader,
    layout: Layout,
    params: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Final learning rate as a fraction of the initial one (cosine decay).
    pub final_lr_fraction: f64,
    pub grad_clip: f64,
    pub seed: u64,
    pub variance: VarianceMode,
    /// Size of the fixed `(x0, t, ε)` probe set scored after every epoch; 0 disables it.
    #[serde(default)]
    pub probe_draws: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            architecture: Architecture::default(),
            epochs: 30,
            batch_size: 16,
            learning_rate: 3e-3,
            final_lr_fraction: 0.05,
            grad_clip: 1.0,
            seed: 0,
            variance: VarianceMode::default(),
            probe_draws: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean minibatch loss of every epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss on the same probe draws after every epoch. Unlike `epoch_losses` it does
    /// not move with the random draws, only with the weights.
    pub probe_losses: Vec<f64>,
    pub steps: usize,
}

fn sinusoidal_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut e = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64).ln() * i as f64 / half.max(1) as f64).exp();
        let arg = t as f64 * freq;
        e[i] = arg.sin();
        e[half + i] = arg.cos();
    }
    e
}

#[inline]
fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// Row ranges for tap offset `(dy, dx)`: output rows/cols `y0..y1`, `x0..x1` read
/// input `y + dy`, `x + dx`, all in bounds.
#[inline]
fn tap_window(h: usize, w: usize, ky: usize, kx: usize) -> (isize, isize, usize, usize, usize, usize) {
    let dy = ky as isize - 1;
    let dx = kx as isize - 1;
    let y0 = (-dy).max(0) as usize;
    let y1 = (h as isize - dy).min(h as isize) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize - dx).min(w as isize) as usize;
    (dy, dx, y0, y1, x0, x1)
}

/// `out[o] += Σ_i w[o][i] ⋆ input[i]` for a 3×3 kernel with zero padding.
fn conv3x3(input: &[f64], in_c: usize, h: usize, w: usize, weights: &[f64], out_c: usize, out: &mut [f64]) {
    let plane = h * w;
    for o in 0..out_c {
        let out_plane = &mut out[o * plane..(o + 1) * plane];
        for i in 0..in_c {
            let in_plane = &input[i * plane..(i + 1) * plane];
            for ky in 0..3 {
                for kx in 0..3 {
                    let k = weights[((o * in_c + i) * 3 + ky) * 3 + kx];
                    if k == 0.0 {
                        continue;
                    }
                    let (dy, dx, y0, y1, x0, x1) = tap_window(h, w, ky, kx);
                    for y in y0..y1 {
                        let s0 = ((y as isize + dy) as usize) * w;
                        let src = &in_plane[(s0 + x0).wrapping_add_signed(dx)..(s0 + x1).wrapping_add_signed(dx)];
                        let dst = &mut out_plane[y * w + x0..y * w + x1];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += k * s;
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of [`conv3x3`] w.r.t. weights (accumulated) and, optionally, input.
#[allow(clippy::too_many_arguments)]
fn conv3x3_backward(
    input: &[f64],
    in_c: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    out_c: usize,
    d_out: &[f64],
    d_weights: &mut [f64],
    mut d_input: Option<&mut [f64]>,
) {
    let plane = h * w;
    for o in 0..out_c {
        let g_plane = &d_out[o * plane..(o + 1) * plane];
        for i in 0..in_c {
            let in_plane = &input[i * plane..(i + 1) * plane];
            for ky in 0..3 {
                for kx in 0..3 {
                    let widx = ((o * in_c + i) * 3 + ky) * 3 + kx;
                    let k = weights[widx];
                    let (dy, dx, y0, y1, x0, x1) = tap_window(h, w, ky, kx);
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let s0 = ((y as isize + dy) as usize) * w;
                        let src = &in_plane[(s0 + x0).wrapping_add_signed(dx)..(s0 + x1).wrapping_add_signed(dx)];
                        let g = &g_plane[y * w + x0..y * w + x1];
                        acc += g.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                    }
                    d_weights[widx] += acc;
                    if let Some(d_in) = d_input.as_deref_mut() {
                        let d_plane = &mut d_in[i * plane..(i + 1) * plane];
                        for y in y0..y1 {
                            let s0 = ((y as isize + dy) as usize) * w;
                            let dst =
                                &mut d_plane[(s0 + x0).wrapping_add_signed(dx)..(s0 + x1).wrapping_add_signed(dx)];
                            let g = &g_plane[y * w + x0..y * w + x1];
                            for (d, gv) in dst.iter_mut().zip(g) {
                                *d += k * gv;
                            }
                        }
                    }
                }
            }
        }
    }
}

struct Activations {
    embed: Vec<f64>,
    a1: Vec<f64>,
    z1: Vec<f64>,
    a2: Vec<f64>,
    z2: Vec<f64>,
    out: Vec<f64>,
}

impl ToyDenoiser {
    /// Randomly initialized network.
    pub fn new(
        shape: Shape,
        steps: usize,
        architecture: Architecture,
        seed: u64,
        variance: VarianceMode,
    ) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::invalid("toy denoiser needs a non-empty image shape"));
        }
        if architecture.hidden == 0 || architecture.embed_dim < 2 || !architecture.embed_dim.is_multiple_of(2) {
            return Err(Error::invalid("toy denoiser needs hidden >= 1 and an even embed_dim >= 2"));
        }
        let layout = Layout::new(shape.channels, &architecture);
        let mut params = vec![0.0; layout.len];
        let mut rng = GaussianNoiseSource::new(seed, 0x1717);
        let mut init = |range: std::ops::Range<usize>, std: f64| {
            for p in &mut params[range] {
                *p = std * rng.next_normal();
            }
        };
        let (c, hd, e) = (layout.c, layout.hd, layout.e);
        init(layout.w1..layout.b1, (2.0 / (9 * c) as f64).sqrt());
        init(layout.p1..layout.w2, (1.0 / e as f64).sqrt());
        init(layout.w2..layout.b2, (2.0 / (9 * hd) as f64).sqrt());
        init(layout.p2..layout.w3, (1.0 / e as f64).sqrt());
        init(layout.w3..layout.b3, 0.1 * (1.0 / (9 * hd) as f64).sqrt());
        let header = WeightsHeader { architecture, steps, shape, seed, variance, param_count: layout.len };
        Ok(ToyDenoiser { header, layout, params })
    }

    pub fn header(&self) -> &WeightsHeader {
        &self.header
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn forward(&self, x: &[f64], t: usize) -> Activations {
        let l = self.layout;
        let s = self.header.shape;
        let (h, w) = (s.height, s.width);
        let plane = h * w;
        let p = &self.params;
        let embed = sinusoidal_embedding(t, l.e);
        let project = |off: usize, o: usize| -> f64 {
            p[off + o * l.e..off + (o + 1) * l.e].iter().zip(&embed).map(|(a, b)| a * b).sum()
        };

        let mut a1 = vec![0.0; l.hd * plane];
        conv3x3(x, l.c, h, w, &p[l.w1..l.b1], l.hd, &mut a1);
        for o in 0..l.hd {
            let bias = p[l.b1 + o] + project(l.p1, o);
            a1[o * plane..(o + 1) * plane].iter_mut().for_each(|v| *v += bias);
        }
        let z1: Vec<f64> = a1.iter().map(|&a| a * sigmoid(a)).collect();

        let mut a2 = vec![0.0; l.hd * plane];
        conv3x3(&z1, l.hd, h, w, &p[l.w2..l.b2], l.hd, &mut a2);
        for o in 0..l.hd {
            let bias = p[l.b2 + o] + project(l.p2, o);
            a2[o * plane..(o + 1) * plane].iter_mut().for_each(|v| *v += bias);
        }
        let z2: Vec<f64> = a2.iter().map(|&a| a * sigmoid(a)).collect();

        let mut out = vec![0.0; l.c * plane];
        conv3x3(&z2, l.hd, h, w, &p[l.w3..l.b3], l.c, &mut out);
        let skip = p[l.bs] + p[l.ws..l.bs].iter().zip(&embed).map(|(a, b)| a * b).sum::<f64>();
        for c in 0..l.c {
            let bias = p[l.b3 + c];
            for (o, &xv) in out[c * plane..(c + 1) * plane].iter_mut().zip(&x[c * plane..(c + 1) * plane]) {
                *o += bias + skip * xv;
            }
        }
        Activations { embed, a1, z1, a2, z2, out }
    }

    /// Accumulate `∂L/∂θ` into `grad` given `∂L/∂out`.
    fn backward(&self, x: &[f64], acts: &Activations, d_out: &[f64], grad: &mut [f64]) {
        let l = self.layout;
        let s = self.header.shape;
        let (h, w) = (s.height, s.width);
        let plane = h * w;
        let p = &self.params;
        let e = &acts.embed;

        let mut d_skip = 0.0;
        for c in 0..l.c {
            let g = &d_out[c * plane..(c + 1) * plane];
            grad[l.b3 + c] += g.iter().sum::<f64>();
            d_skip += g.iter().zip(&x[c * plane..(c + 1) * plane]).map(|(a, b)| a * b).sum::<f64>();
        }
        grad[l.bs] += d_skip;
        for j in 0..l.e {
            grad[l.ws + j] += d_skip * e[j];
        }

        let mut d_z2 = vec![0.0; l.hd * plane];
        conv3x3_backward(&acts.z2, l.hd, h, w, &p[l.w3..l.b3], l.c, d_out, &mut grad[l.w3..l.b3], Some(&mut d_z2));

        let silu_grad = |a: f64| {
            let sg = sigmoid(a);
            sg * (1.0 + a * (1.0 - sg))
        };
        let d_a2: Vec<f64> = d_z2.iter().zip(&acts.a2).map(|(g, &a)| g * silu_grad(a)).collect();
        for o in 0..l.hd {
            let sum: f64 = d_a2[o * plane..(o + 1) * plane].iter().sum();
            grad[l.b2 + o] += sum;
            for j in 0..l.e {
                grad[l.p2 + o * l.e + j] += sum * e[j];
            }
        }
        let mut d_z1 = vec![0.0; l.hd * plane];
        conv3x3_backward(&acts.z1, l.hd, h, w, &p[l.w2..l.b2], l.hd, &d_a2, &mut grad[l.w2..l.b2], Some(&mut d_z1));

        let d_a1: Vec<f64> = d_z1.iter().zip(&acts.a1).map(|(g, &a)| g * silu_grad(a)).collect();
        for o in 0..l.hd {
            let sum: f64 = d_a1[o * plane..(o + 1) * plane].iter().sum();
            grad[l.b1 + o] += sum;
            for j in 0..l.e {
                grad[l.p1 + o * l.e + j] += sum * e[j];
            }
        }
        conv3x3_backward(x, l.c, h, w, &p[l.w1..l.b1], l.hd, &d_a1, &mut grad[l.w1..l.b1], None);
    }

    fn probe_loss(&self, x_t: &[f64], t: usize, target: &[f64]) -> f64 {
        let out = self.forward(x_t, t).out;
        out.iter().zip(target).map(|(o, y)| (o - y).powi(2)).sum::<f64>() / target.len() as f64
    }

    /// Squared error `mean((eps_hat − target)²)` and its parameter gradient.
    fn loss_and_grad(&self, x_t: &[f64], t: usize, target: &[f64]) -> (f64, Vec<f64>) {
        let acts = self.forward(x_t, t);
        let n = target.len() as f64;
        let mut loss = 0.0;
        let d_out: Vec<f64> = acts
            .out
            .iter()
            .zip(target)
            .map(|(o, y)| {
                let r = o - y;
                loss += r * r;
                2.0 * r / n
            })
            .collect();
        let mut grad = vec![0.0; self.params.len()];
        self.backward(x_t, &acts, &d_out, &mut grad);
        (loss / n, grad)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(24 + header.len() + 8 * self.params.len());
        out.extend_from_slice(&WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Format(format!("toy weights: {msg}"));
        if bytes.len() < 16 || bytes[..8] != WEIGHTS_MAGIC {
            return Err(bad("missing magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != WEIGHTS_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let rest = &bytes[16..];
        if rest.len() < header_len + 8 {
            return Err(bad("truncated header"));
        }
        let header: WeightsHeader = serde_json::from_slice(&rest[..header_len])?;
        let count = u64::from_le_bytes(rest[header_len..header_len + 8].try_into().unwrap()) as usize;
        let body = &rest[header_len + 8..];
        let layout = Layout::new(header.shape.channels, &header.architecture);
        if count != layout.len || header.param_count != layout.len || body.len() != 8 * count {
            return Err(bad("parameter count does not match the architecture"));
        }
        let params = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(ToyDenoiser { header, layout, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn with_variance(mut self, variance: VarianceMode) -> Self {
        self.header.variance = variance;
        self
    }
}

impl Denoiser for ToyDenoiser {
    fn predict(&self, x_t: &Tensor, t: usize) -> Result<EpsilonPrediction> {
        if x_t.shape() != self.header.shape {
            return Err(Error::invalid(format!("toy denoiser expects {}, got {}", self.header.shape, x_t.shape())));
        }
        if t == 0 || t > self.header.steps {
            return Err(Error::invalid(format!("timestep {t} outside 1..={}", self.header.steps)));
        }
        let acts = self.forward(x_t.as_slice(), t);
        Ok(EpsilonPrediction { epsilon: Tensor::from_vec(x_t.shape(), acts.out)?, variance: self.header.variance })
    }

    fn steps(&self) -> Option<usize> {
        Some(self.header.steps)
    }

    fn shape(&self) -> Option<Shape> {
        Some(self.header.shape)
    }

    fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Train with the standard ε objective: draw `(x0, t, ε)`, form
/// `x_t = √ᾱ_t x0 + √(1−ᾱ_t) ε` and minimize `‖ε̂(x_t, t) − ε‖²`.
///
/// Minibatch gradients are computed in parallel but summed in sample order, so a
/// fixed seed gives bit-identical weights regardless of thread count.
pub fn train_toy_denoiser(
    dataset: &[Tensor],
    schedule: &Schedule,
    config: &TrainConfig,
) -> Result<(ToyDenoiser, TrainReport)> {
    let first = dataset.first().ok_or_else(|| Error::invalid("training dataset is empty"))?;
    let shape = first.shape();
    for (i, img) in dataset.iter().enumerate() {
        if img.shape() != shape {
            return Err(Error::invalid(format!("image {i} has shape {}, expected {shape}", img.shape())));
        }
        if img.as_slice().iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!("image {i} has values outside [-1, 1]")));
        }
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::invalid("batch_size and epochs must be positive"));
    }

    let mut net = ToyDenoiser::new(shape, schedule.steps(), config.architecture, config.seed, config.variance)?;
    let mut adam = Adam::new(net.params.len());
    let mut rng = GaussianNoiseSource::new(config.seed, 0x7a11);
    let batches_per_epoch = dataset.len().div_ceil(config.batch_size);
    let total_steps = batches_per_epoch * config.epochs;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut probe_losses = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    let mut probe_rng = GaussianNoiseSource::new(config.seed, 0x9b0e);
    let probe: Vec<(Tensor, usize, Tensor)> = (0..config.probe_draws)
        .map(|k| {
            let t = probe_rng.uniform_int(1, schedule.steps());
            let eps = probe_rng.tensor(shape);
            let x_t = schedule.forward_jump(&dataset[k % dataset.len()], t, &eps).expect("shapes checked");
            (x_t, t, eps)
        })
        .collect();

    for epoch in 0..config.epochs {
        // Fisher-Yates on the seeded stream
        for i in (1..order.len()).rev() {
            let j = rng.uniform_int(0, i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let draws: Vec<(usize, usize, Tensor)> =
                batch.iter().map(|&i| (i, rng.uniform_int(1, schedule.steps()), rng.tensor(shape))).collect();
            let results: Vec<(f64, Vec<f64>)> = draws
                .par_iter()
                .map(|(i, t, eps)| {
                    let x_t = schedule.forward_jump(&dataset[*i], *t, eps).expect("shapes checked");
                    net.loss_and_grad(x_t.as_slice(), *t, eps.as_slice())
                })
                .collect();
            let mut grad = vec![0.0; net.params.len()];
            let mut loss = 0.0;
            for (l, g) in &results {
                loss += l;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            loss *= scale;
            grad.iter_mut().for_each(|g| *g *= scale);

            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !loss.is_finite() || !norm.is_finite() {
                let param_norm = net.params.iter().map(|p| p * p).sum::<f64>().sqrt();
                return Err(Error::TrainingFailure(format!(
                    "non-finite loss at epoch {epoch}, step {step} (loss {loss}, grad norm {norm}, param norm {param_norm})"
                )));
            }
            if config.grad_clip > 0.0 && norm > config.grad_clip {
                grad.iter_mut().for_each(|g| *g *= config.grad_clip / norm);
            }
            let progress = step as f64 / total_steps.max(1) as f64;
            let floor = config.final_lr_fraction;
            let lr =
                config.learning_rate * (floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()));
            adam.update(&mut net.params, &grad, lr);
            epoch_loss += loss;
            step += 1;
        }
        epoch_losses.push(epoch_loss / batches_per_epoch as f64);
        if !probe.is_empty() {
            let total: f64 =
                probe.par_iter().map(|(x_t, t, eps)| net.probe_loss(x_t.as_slice(), *t, eps.as_slice())).sum();
            probe_losses.push(total / probe.len() as f64);
        }
    }
    Ok((net, TrainReport { epoch_losses, probe_losses, steps: step }))
}
