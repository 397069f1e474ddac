//! The fixed forward (noising) process.
//!
//! Timesteps are 1-based: `t = 1..=T`, with `t = 0` denoting the clean image and
//! `alpha_bar(0) = 1`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BETA_START: f64 = 1e-4;
pub const BETA_END: f64 = 0.02;
pub const DEFAULT_STEPS: usize = 250;

/// β, α = 1 − β and ᾱ = ∏α tables for a diffusion of `T` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

/// Wire form: `{"T": 250, "beta": [...]}`.
#[derive(Debug, Serialize, Deserialize)]
struct ScheduleDoc {
    #[serde(rename = "T")]
    steps: usize,
    beta: Vec<f64>,
}

impl Schedule {
    /// β linearly interpolated from 1e-4 at `t = 1` to 0.02 at `t = T`.
    pub fn linear(steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::invalid(format!("a linear schedule needs T >= 2, got {steps}")));
        }
        let last = (steps - 1) as f64;
        let betas = (0..steps)
            .map(|i| {
                let f = i as f64 / last;
                BETA_START * (1.0 - f) + BETA_END * f
            })
            .collect();
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::invalid("schedule must have at least one step"));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::invalid(format!("beta {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        Ok(Schedule { betas, alphas, alpha_bars })
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// β_t for `1 <= t <= T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// ᾱ_t for `0 <= t <= T`; ᾱ_0 = 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Posterior variance β̃_t = (1 − ᾱ_{t−1}) / (1 − ᾱ_t) · β_t.
    pub fn beta_tilde(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t)) * self.beta(t)
    }

    pub(crate) fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::invalid(format!("timestep {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }

    /// One forward step: `√(1−β_t)·x + √β_t·noise`.
    pub fn forward_step(&self, x: &Tensor, t: usize, noise: &Tensor) -> Result<Tensor> {
        self.check_step(t)?;
        let beta = self.beta(t);
        x.scaled_add((1.0 - beta).sqrt(), noise, beta.sqrt())
    }

    /// Closed-form jump from the clean image: `√ᾱ_t·x0 + √(1−ᾱ_t)·noise`.
    pub fn forward_jump(&self, x0: &Tensor, t: usize, noise: &Tensor) -> Result<Tensor> {
        self.check_step(t)?;
        let ab = self.alpha_bar(t);
        x0.scaled_add(ab.sqrt(), noise, (1.0 - ab).sqrt())
    }

    /// Jump from noise level `s` to `t > s` in one draw:
    /// `√(ᾱ_t/ᾱ_s)·x_s + √(1 − ᾱ_t/ᾱ_s)·noise`.
    pub fn forward_rejump(&self, x_s: &Tensor, s: usize, t: usize, noise: &Tensor) -> Result<Tensor> {
        if s >= t {
            return Err(Error::invalid(format!("rejump needs s < t, got s={s}, t={t}")));
        }
        self.check_step(t)?;
        let ratio = self.alpha_bar(t) / self.alpha_bar(s);
        x_s.scaled_add(ratio.sqrt(), noise, (1.0 - ratio).sqrt())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ScheduleDoc { steps: self.steps(), beta: self.betas.clone() })
            .expect("schedule serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let doc: ScheduleDoc = serde_json::from_str(json)?;
        if doc.beta.len() != doc.steps {
            return Err(Error::Format(format!("schedule declares T={} but lists {} betas", doc.steps, doc.beta.len())));
        }
        Self::from_betas(doc.beta)
    }

    /// SHA-256 of the JSON form, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}
