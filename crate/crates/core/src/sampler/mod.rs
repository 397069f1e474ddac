//! Reverse diffusion with masked composition and windowed resampling.
//!
//! Each reverse step denoises the whole canvas, re-encodes the known landmarks at
//! the matching noise level and keeps them where the mask says so. At the jump
//! points of a [`ResamplePlan`] the merged state is pushed `λ` steps back up the
//! forward process in a single draw and denoised down again, `cycles_per_point`
//! times, which lets the generated region harmonize with the landmarks.

mod plan;

pub use plan::{
    build_resample_plan, count_ops, OpCountReport, ResampleConfig, ResamplePlan, Strategy, DEFAULT_JUMP_LENGTH,
    DEFAULT_REPEATS,
};

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::noise::{GaussianNoiseSource, TrajectoryNoise};
use crate::schedule::Schedule;
use crate::tensor::{Mask, Shape, Tensor};

/// Noise level the known region is encoded at when merging into `x_{t−1}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum KnownNoiseIndex {
    /// ᾱ_{t−1}: the level of the tensor being merged into.
    #[default]
    #[serde(rename = "t-1")]
    Previous,
    /// ᾱ_t, one level noisier than the merge target.
    #[serde(rename = "t")]
    Current,
}

impl std::str::FromStr for KnownNoiseIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t-1" => Ok(KnownNoiseIndex::Previous),
            "t" => Ok(KnownNoiseIndex::Current),
            other => Err(Error::invalid(format!("known noise index must be `t` or `t-1`, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerOptions {
    /// Clamp the implied clean image to [-1, 1] before forming the step mean.
    pub clamp_x0: bool,
    pub known_noise_index: KnownNoiseIndex,
    /// Capture the merged state every `k` denoise ops.
    pub snapshot_every: Option<u64>,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions { clamp_x0: true, known_noise_index: KnownNoiseIndex::Previous, snapshot_every: None }
    }
}

impl SamplerOptions {
    /// Settings for unbounded (non-image) data.
    pub fn unclamped() -> Self {
        SamplerOptions { clamp_x0: false, ..Self::default() }
    }
}

/// Known pixels and the keep-mask (`true` = known).
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionInput {
    known: Tensor,
    mask: Mask,
}

impl CompositionInput {
    pub fn new(known: Tensor, mask: Mask) -> Result<Self> {
        if known.shape() != mask.shape() {
            return Err(Error::invalid(format!("known is {}, mask is {}", known.shape(), mask.shape())));
        }
        Ok(CompositionInput { known, mask })
    }

    /// Nothing known: unconditional generation of `shape`.
    pub fn empty(shape: Shape) -> Self {
        CompositionInput { known: Tensor::zeros(shape), mask: Mask::zeros(shape) }
    }

    pub fn known(&self) -> &Tensor {
        &self.known
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn shape(&self) -> Shape {
        self.known.shape()
    }
}

#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub index: usize,
    pub ops_done: u64,
    /// Noise level of the captured state.
    pub t: usize,
    pub image: Tensor,
}

/// Hooks a caller can attach to a running paint.
pub trait PaintObserver {
    fn on_progress(&mut self, _done: u64, _total: u64) {}

    fn on_snapshot(&mut self, _snapshot: &Snapshot) {}

    fn is_cancelled(&self) -> bool {
        false
    }
}

pub struct NoObserver;

impl PaintObserver for NoObserver {}

impl PaintObserver for CancelToken {
    fn is_cancelled(&self) -> bool {
        CancelToken::is_cancelled(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaintResult {
    pub image: Tensor,
    /// Ops actually incurred.
    pub ops: OpCountReport,
    pub snapshots: Vec<Snapshot>,
}

/// What a cancelled paint had produced.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialPaint {
    pub completed_ops: u64,
    pub total_ops: u64,
    pub latest: Tensor,
    pub snapshots: Vec<Snapshot>,
}

/// Reproducibility record written next to a paint result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub trajectory: u64,
    pub config: ResampleConfig,
    pub options: SamplerOptions,
    pub schedule_digest: String,
    pub denoiser_digest: String,
    pub shape: Shape,
    pub ops: OpCountReport,
}

/// One ancestral step `x_t → x_{t−1}`.
///
/// `μ = (x_t − β_t/√(1−ᾱ_t)·ε̂) / √α_t`, plus `σ_t·z` for `t > 1`. When clamping is
/// on, ε̂ is first replaced by the value consistent with the clamped x̂0.
pub fn reverse_step(
    x_t: &Tensor,
    t: usize,
    denoiser: &dyn Denoiser,
    schedule: &Schedule,
    noise: &mut GaussianNoiseSource,
    options: &SamplerOptions,
) -> Result<Tensor> {
    schedule.check_step(t)?;
    let pred = denoiser.predict(x_t, t)?;
    if pred.epsilon.shape() != x_t.shape() {
        return Err(Error::SamplingFailure {
            t,
            reason: format!("denoiser returned {} for input {}", pred.epsilon.shape(), x_t.shape()),
        });
    }
    if !pred.epsilon.is_finite() {
        return Err(Error::SamplingFailure { t, reason: "denoiser output is not finite".into() });
    }

    let ab = schedule.alpha_bar(t);
    let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
    let beta = schedule.beta(t);
    let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
    let eps_coef = beta / sn;

    let mut out = Tensor::zeros(x_t.shape());
    for ((o, &x), &e) in out.as_mut_slice().iter_mut().zip(x_t.as_slice()).zip(pred.epsilon.as_slice()) {
        let e = if options.clamp_x0 {
            let x0 = ((x - sn * e) / sa).clamp(-1.0, 1.0);
            (x - sa * x0) / sn
        } else {
            e
        };
        *o = (x - eps_coef * e) * inv_sqrt_alpha;
    }
    if t > 1 {
        let sigma = pred.variance.variance(schedule, t).sqrt();
        for o in out.as_mut_slice() {
            *o += sigma * noise.next_normal();
        }
    }
    Ok(out)
}

/// The known image at noise level `t` with fresh noise; exact at `t = 0`.
pub fn encode_known(known: &Tensor, t: usize, schedule: &Schedule, noise: &mut GaussianNoiseSource) -> Result<Tensor> {
    if t == 0 {
        return Ok(known.clone());
    }
    let eps = noise.tensor(known.shape());
    schedule.forward_jump(known, t, &eps)
}

/// `m ⊙ known + (1 − m) ⊙ unknown`.
pub fn merge(known_t: &Tensor, unknown_t: &Tensor, mask: &Mask) -> Result<Tensor> {
    known_t.ensure_same_shape(unknown_t)?;
    if mask.shape() != known_t.shape() {
        return Err(Error::invalid(format!("mask is {}, tensors are {}", mask.shape(), known_t.shape())));
    }
    let data = known_t
        .as_slice()
        .iter()
        .zip(unknown_t.as_slice())
        .zip(mask.as_slice())
        .map(|((&k, &u), &m)| if m { k } else { u })
        .collect();
    Tensor::from_vec(known_t.shape(), data)
}

fn check_compat(denoiser: &dyn Denoiser, schedule: &Schedule, shape: Shape) -> Result<()> {
    if let Some(steps) = denoiser.steps() {
        if steps != schedule.steps() {
            return Err(Error::invalid(format!(
                "denoiser is built for T={steps}, schedule has T={}",
                schedule.steps()
            )));
        }
    }
    if let Some(s) = denoiser.shape() {
        if s != shape {
            return Err(Error::invalid(format!("denoiser expects {s}, canvas is {shape}")));
        }
    }
    Ok(())
}

struct Trajectory<'a> {
    input: &'a CompositionInput,
    denoiser: &'a dyn Denoiser,
    schedule: &'a Schedule,
    options: &'a SamplerOptions,
    noise: &'a mut TrajectoryNoise,
    observer: &'a mut dyn PaintObserver,
    total: u64,
    n_dn: u64,
    n_fwd: u64,
    snapshots: Vec<Snapshot>,
}

impl Trajectory<'_> {
    fn done(&self) -> u64 {
        self.n_dn + self.n_fwd
    }

    fn check_cancel(&self, x: &Tensor) -> Result<()> {
        if self.observer.is_cancelled() {
            return Err(Error::Cancelled(Box::new(PartialPaint {
                completed_ops: self.done(),
                total_ops: self.total,
                latest: x.clone(),
                snapshots: self.snapshots.clone(),
            })));
        }
        Ok(())
    }

    /// Denoise `x_t` and merge the known region: returns `x_{t−1}`.
    fn denoise_and_merge(&mut self, x: &Tensor, t: usize) -> Result<Tensor> {
        self.check_cancel(x)?;
        let unknown = reverse_step(x, t, self.denoiser, self.schedule, &mut self.noise.reverse, self.options)?;
        let level = match self.options.known_noise_index {
            KnownNoiseIndex::Previous => t - 1,
            KnownNoiseIndex::Current => t,
        };
        let known = encode_known(self.input.known(), level, self.schedule, &mut self.noise.known)?;
        let merged = merge(&known, &unknown, self.input.mask())?;
        self.n_dn += 1;
        self.observer.on_progress(self.done(), self.total);
        if let Some(k) = self.options.snapshot_every {
            if k > 0 && self.n_dn.is_multiple_of(k) {
                let snap =
                    Snapshot { index: self.snapshots.len(), ops_done: self.done(), t: t - 1, image: merged.clone() };
                self.observer.on_snapshot(&snap);
                self.snapshots.push(snap);
            }
        }
        Ok(merged)
    }

    fn rejump(&mut self, x: &Tensor, from: usize, to: usize) -> Result<Tensor> {
        self.check_cancel(x)?;
        let eps = self.noise.reverse.tensor(x.shape());
        let out = self.schedule.forward_rejump(x, from, to, &eps)?;
        self.n_fwd += 1;
        self.observer.on_progress(self.done(), self.total);
        Ok(out)
    }
}

/// Fill the unknown region of `input`.
///
/// Starts from `x_T ~ N(0, I)` and walks `t = T … 1`. After reaching a jump point
/// `p` of the plan, repeats `cycles_per_point` times: jump to `p + λ` in one
/// forward draw, then denoise back to `p` merging at every step.
#[allow(clippy::too_many_arguments)]
pub fn paint(
    input: &CompositionInput,
    denoiser: &dyn Denoiser,
    schedule: &Schedule,
    plan: &ResamplePlan,
    noise: &mut TrajectoryNoise,
    options: &SamplerOptions,
    observer: &mut dyn PaintObserver,
) -> Result<PaintResult> {
    if plan.steps != schedule.steps() {
        return Err(Error::invalid(format!("plan is for T={}, schedule has T={}", plan.steps, schedule.steps())));
    }
    check_compat(denoiser, schedule, input.shape())?;

    let total = count_ops(plan).n_total;
    let mut x = noise.reverse.tensor(input.shape());
    let mut traj = Trajectory {
        input,
        denoiser,
        schedule,
        options,
        noise,
        observer,
        total,
        n_dn: 0,
        n_fwd: 0,
        snapshots: Vec::new(),
    };

    let lambda = plan.jump_length;
    for t in (1..=schedule.steps()).rev() {
        x = traj.denoise_and_merge(&x, t)?;
        let p = t - 1;
        if plan.is_jump_point(p) {
            for _ in 0..plan.cycles_per_point {
                x = traj.rejump(&x, p, p + lambda)?;
                for s in (p + 1..=p + lambda).rev() {
                    x = traj.denoise_and_merge(&x, s)?;
                }
            }
        }
    }

    Ok(PaintResult { image: x, ops: OpCountReport::new(traj.n_dn, traj.n_fwd), snapshots: traj.snapshots })
}

/// `n` independent ancestral samples; sample `i` uses trajectory `i` of `seed`.
pub fn unconditional_sample(
    denoiser: &dyn Denoiser,
    schedule: &Schedule,
    shape: Shape,
    seed: u64,
    n: usize,
    options: &SamplerOptions,
) -> Result<Vec<Tensor>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    check_compat(denoiser, schedule, shape)?;
    (0..n as u64)
        .map(|i| {
            let mut noise = TrajectoryNoise::new(seed, i);
            let mut x = noise.reverse.tensor(shape);
            for t in (1..=schedule.steps()).rev() {
                x = reverse_step(&x, t, denoiser, schedule, &mut noise.reverse, options)?;
            }
            Ok(x)
        })
        .collect()
}
