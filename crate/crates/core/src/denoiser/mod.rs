//! ε-predictors for the reverse process.
//!
//! A [`Denoiser`] maps a noisy tensor `x_t` at timestep `t` to an estimate of the
//! noise that produced it. The sampler turns that estimate into the reverse-step
//! mean; the step variance comes from the [`VarianceMode`] carried on each
//! prediction.

mod gaussian;
mod gmm;
mod toy;

pub use gaussian::{GaussianDenoiser, GaussianModel};
pub use gmm::{analytic_gmm_epsilon, gmm_posterior_mean, GmmDenoiser, GmmModel};
pub use toy::{
    train_toy_denoiser, Architecture, ToyDenoiser, TrainConfig, TrainReport, WeightsHeader, WEIGHTS_MAGIC,
    WEIGHTS_VERSION,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::schedule::Schedule;
use crate::tensor::{Shape, Tensor};

/// Which fixed variance the reverse step uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// σ_t² = β_t
    FixedBeta,
    /// σ_t² = β̃_t = (1 − ᾱ_{t−1}) / (1 − ᾱ_t) · β_t
    #[default]
    FixedBetaTilde,
}

impl VarianceMode {
    pub fn variance(self, schedule: &Schedule, t: usize) -> f64 {
        match self {
            VarianceMode::FixedBeta => schedule.beta(t),
            VarianceMode::FixedBetaTilde => schedule.beta_tilde(t),
        }
    }
}

impl std::str::FromStr for VarianceMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "fixed_beta" | "beta" => Ok(VarianceMode::FixedBeta),
            "fixed_beta_tilde" | "beta_tilde" => Ok(VarianceMode::FixedBetaTilde),
            other => Err(format!("unknown variance mode `{other}` (expected fixed_beta or fixed_beta_tilde)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonPrediction {
    pub epsilon: Tensor,
    pub variance: VarianceMode,
}

/// A pure function of `(x_t, t)`; implementations must be deterministic and
/// shareable across sampling threads.
pub trait Denoiser: Send + Sync {
    fn predict(&self, x_t: &Tensor, t: usize) -> Result<EpsilonPrediction>;

    /// The schedule length this denoiser was built for, if it is tied to one.
    fn steps(&self) -> Option<usize> {
        None
    }

    /// The data shape this denoiser requires, if it is tied to one.
    fn shape(&self) -> Option<Shape> {
        None
    }

    /// Content digest for reproducibility manifests.
    fn digest(&self) -> String;
}

impl<D: Denoiser + ?Sized> Denoiser for std::sync::Arc<D> {
    fn predict(&self, x_t: &Tensor, t: usize) -> Result<EpsilonPrediction> {
        (**self).predict(x_t, t)
    }

    fn steps(&self) -> Option<usize> {
        (**self).steps()
    }

    fn shape(&self) -> Option<Shape> {
        (**self).shape()
    }

    fn digest(&self) -> String {
        (**self).digest()
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn predict(&self, x_t: &Tensor, t: usize) -> Result<EpsilonPrediction> {
        (**self).predict(x_t, t)
    }

    fn steps(&self) -> Option<usize> {
        (**self).steps()
    }

    fn shape(&self) -> Option<Shape> {
        (**self).shape()
    }

    fn digest(&self) -> String {
        (**self).digest()
    }
}

/// Clean-image estimate implied by an ε prediction: `(x_t − √(1−ᾱ_t)·ε̂) / √ᾱ_t`.
pub fn implied_x0(schedule: &Schedule, x_t: &Tensor, t: usize, epsilon: &Tensor) -> Result<Tensor> {
    let ab = schedule.alpha_bar(t);
    x_t.scaled_add(1.0 / ab.sqrt(), epsilon, -(1.0 - ab).sqrt() / ab.sqrt())
}
