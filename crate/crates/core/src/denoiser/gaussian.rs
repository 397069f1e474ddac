use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Denoiser, EpsilonPrediction, VarianceMode};
use crate::error::{Error, Result};
use crate::schedule::Schedule;
use crate::tensor::Tensor;

/// A single Gaussian `N(mean, covariance)` with full covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    pub mean: Vec<f64>,
    /// Row-major `d × d`, symmetric positive definite.
    pub covariance: Vec<Vec<f64>>,
}

impl GaussianModel {
    pub fn new(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> Result<Self> {
        let m = GaussianModel { mean, covariance };
        m.validate()?;
        Ok(m)
    }

    /// Zero-mean bivariate normal with unit variances and correlation `rho`.
    pub fn correlated_pair(rho: f64) -> Result<Self> {
        Self::new(vec![0.0, 0.0], vec![vec![1.0, rho], vec![rho, 1.0]])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn validate(&self) -> Result<()> {
        let d = self.mean.len();
        if d == 0 || self.covariance.len() != d || self.covariance.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("covariance must be d x d for a mean of length d"));
        }
        for i in 0..d {
            for j in 0..d {
                if (self.covariance[i][j] - self.covariance[j][i]).abs() > 1e-12 {
                    return Err(Error::invalid("covariance must be symmetric"));
                }
            }
        }
        if self.cov_matrix().cholesky().is_none() {
            return Err(Error::invalid("covariance must be positive definite"));
        }
        Ok(())
    }

    fn cov_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.covariance[i][j])
    }
}

/// Exact denoiser for Gaussian data.
///
/// `E[x0 | x_t] = μ + √ᾱ_t Σ (ᾱ_t Σ + (1 − ᾱ_t) I)⁻¹ (x_t − √ᾱ_t μ)`. The gain
/// matrices are precomputed for every timestep, so this is meant for
/// low-dimensional data.
#[derive(Debug, Clone)]
pub struct GaussianDenoiser {
    model: GaussianModel,
    schedule: Schedule,
    gains: Vec<DMatrix<f64>>,
    variance: VarianceMode,
}

impl GaussianDenoiser {
    pub fn new(model: GaussianModel, schedule: Schedule) -> Result<Self> {
        model.validate()?;
        let d = model.dim();
        let cov = model.cov_matrix();
        let gains = (1..=schedule.steps())
            .map(|t| {
                let ab = schedule.alpha_bar(t);
                let marginal = &cov * ab + DMatrix::identity(d, d) * (1.0 - ab);
                let inv = marginal.cholesky().expect("marginal covariance is positive definite").inverse();
                &cov * inv * ab.sqrt()
            })
            .collect();
        Ok(GaussianDenoiser { model, schedule, gains, variance: VarianceMode::default() })
    }

    pub fn with_variance(mut self, variance: VarianceMode) -> Self {
        self.variance = variance;
        self
    }

    pub fn posterior_mean(&self, x_t: &Tensor, t: usize) -> Result<Tensor> {
        self.schedule.check_step(t)?;
        if x_t.len() != self.model.dim() {
            return Err(Error::invalid(format!(
                "gaussian has dimension {}, input has {}",
                self.model.dim(),
                x_t.len()
            )));
        }
        let sa = self.schedule.alpha_bar(t).sqrt();
        let mu = DVector::from_column_slice(&self.model.mean);
        let resid = DVector::from_column_slice(x_t.as_slice()) - &mu * sa;
        let post = mu + &self.gains[t - 1] * resid;
        Tensor::from_vec(x_t.shape(), post.as_slice().to_vec())
    }
}

impl Denoiser for GaussianDenoiser {
    fn predict(&self, x_t: &Tensor, t: usize) -> Result<EpsilonPrediction> {
        let x0 = self.posterior_mean(x_t, t)?;
        let ab = self.schedule.alpha_bar(t);
        let epsilon = x_t.scaled_add(1.0 / (1.0 - ab).sqrt(), &x0, -ab.sqrt() / (1.0 - ab).sqrt())?;
        Ok(EpsilonPrediction { epsilon, variance: self.variance })
    }

    fn steps(&self) -> Option<usize> {
        Some(self.schedule.steps())
    }

    fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"gaussian\0");
        h.update(serde_json::to_vec(&self.model).expect("gaussian serializes"));
        h.update(self.schedule.digest().as_bytes());
        h.update(format!("{:?}", self.variance).as_bytes());
        hex::encode(h.finalize())
    }
}
