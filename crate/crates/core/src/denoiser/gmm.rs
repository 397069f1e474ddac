use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Denoiser, EpsilonPrediction, VarianceMode};
use crate::error::{Error, Result};
use crate::schedule::Schedule;
use crate::tensor::Tensor;

/// Isotropic Gaussian mixture prior over clean data.
///
/// A component mean of length 1 is a constant vector and broadcasts to any data
/// dimension, which lets one small model describe whole images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GmmDoc", into = "GmmDoc")]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    sigmas: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GmmDoc {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    sigma: Vec<f64>,
}

impl TryFrom<GmmDoc> for GmmModel {
    type Error = Error;

    fn try_from(doc: GmmDoc) -> Result<Self> {
        GmmModel::new(doc.weights, doc.means, doc.sigma)
    }
}

impl From<GmmModel> for GmmDoc {
    fn from(m: GmmModel) -> Self {
        GmmDoc { weights: m.weights, means: m.means, sigma: m.sigmas }
    }
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, sigmas: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || sigmas.len() != k {
            return Err(Error::invalid(format!(
                "gmm needs matching non-empty weights/means/sigma, got {}/{}/{}",
                k,
                means.len(),
                sigmas.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("gmm weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("gmm weights sum to {total}, not 1")));
        }
        if sigmas.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::invalid("gmm sigma must be positive"));
        }
        let dims: Vec<usize> = means.iter().map(Vec::len).filter(|&d| d != 1).collect();
        if means.iter().any(Vec::is_empty) || dims.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::invalid("gmm means must share one dimension (or have length 1)"));
        }
        if means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("gmm means must be finite"));
        }
        Ok(GmmModel { weights, means, sigmas })
    }

    /// Single standard normal component.
    pub fn standard_normal() -> Self {
        GmmModel { weights: vec![1.0], means: vec![vec![0.0]], sigmas: vec![1.0] }
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// Data dimension fixed by the means, or `None` when every mean broadcasts.
    pub fn dim(&self) -> Option<usize> {
        self.means.iter().map(Vec::len).find(|&d| d != 1)
    }

    #[inline]
    fn mean(&self, k: usize, i: usize) -> f64 {
        let m = &self.means[k];
        if m.len() == 1 {
            m[0]
        } else {
            m[i]
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        match self.dim() {
            Some(d) if d != len => Err(Error::invalid(format!("gmm has dimension {d}, input has {len}"))),
            _ => Ok(()),
        }
    }

    /// Per-component posterior means `E[x0 | x_t, k]` and log responsibilities.
    fn posterior_parts(&self, x_t: &[f64], ab: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let d = x_t.len() as f64;
        let sa = ab.sqrt();
        let mut means = Vec::with_capacity(self.components());
        let mut log_resp = Vec::with_capacity(self.components());
        for k in 0..self.components() {
            let s2 = self.sigmas[k] * self.sigmas[k];
            let marginal_var = ab * s2 + (1.0 - ab);
            let gain = sa * s2 / marginal_var;
            let mut sq = 0.0;
            let mut post = Vec::with_capacity(x_t.len());
            for (i, &x) in x_t.iter().enumerate() {
                let mu = self.mean(k, i);
                let r = x - sa * mu;
                sq += r * r;
                post.push(mu + gain * r);
            }
            let log_pdf = -0.5 * sq / marginal_var - 0.5 * d * (2.0 * std::f64::consts::PI * marginal_var).ln();
            log_resp.push(self.weights[k].ln() + log_pdf);
            means.push(post);
        }
        let max = log_resp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm = max + log_resp.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        for l in &mut log_resp {
            *l -= norm;
        }
        (means, log_resp)
    }
}

/// `E[x0 | x_t]` under the mixture prior and the forward marginal
/// `q(x_t | x0) = N(√ᾱ_t x0, (1 − ᾱ_t) I)`. Responsibilities are normalized in the
/// log domain.
pub fn gmm_posterior_mean(model: &GmmModel, x_t: &Tensor, t: usize, schedule: &Schedule) -> Result<Tensor> {
    schedule.check_step(t)?;
    model.check_dim(x_t.len())?;
    let (means, log_resp) = model.posterior_parts(x_t.as_slice(), schedule.alpha_bar(t));
    let mut out = vec![0.0; x_t.len()];
    for (post, lr) in means.iter().zip(&log_resp) {
        let r = lr.exp();
        if r == 0.0 {
            continue;
        }
        for (o, p) in out.iter_mut().zip(post) {
            *o += r * p;
        }
    }
    Tensor::from_vec(x_t.shape(), out)
}

/// ε̂ = (x_t − √ᾱ_t·E[x0 | x_t]) / √(1 − ᾱ_t).
pub fn analytic_gmm_epsilon(
    model: &GmmModel,
    x_t: &Tensor,
    t: usize,
    schedule: &Schedule,
    variance: VarianceMode,
) -> Result<EpsilonPrediction> {
    if t == 0 {
        return Err(Error::invalid("no noise to predict at t = 0"));
    }
    let x0 = gmm_posterior_mean(model, x_t, t, schedule)?;
    let ab = schedule.alpha_bar(t);
    let epsilon = x_t.scaled_add(1.0 / (1.0 - ab).sqrt(), &x0, -ab.sqrt() / (1.0 - ab).sqrt())?;
    Ok(EpsilonPrediction { epsilon, variance })
}

/// Exact denoiser for data drawn from a [`GmmModel`].
#[derive(Debug, Clone)]
pub struct GmmDenoiser {
    model: GmmModel,
    schedule: Schedule,
    variance: VarianceMode,
}

impl GmmDenoiser {
    pub fn new(model: GmmModel, schedule: Schedule) -> Self {
        GmmDenoiser { model, schedule, variance: VarianceMode::default() }
    }

    pub fn with_variance(mut self, variance: VarianceMode) -> Self {
        self.variance = variance;
        self
    }

    pub fn model(&self) -> &GmmModel {
        &self.model
    }
}

impl Denoiser for GmmDenoiser {
    fn predict(&self, x_t: &Tensor, t: usize) -> Result<EpsilonPrediction> {
        analytic_gmm_epsilon(&self.model, x_t, t, &self.schedule, self.variance)
    }

    fn steps(&self) -> Option<usize> {
        Some(self.schedule.steps())
    }

    fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"gmm\0");
        h.update(serde_json::to_vec(&self.model).expect("gmm serializes"));
        h.update(self.schedule.digest().as_bytes());
        h.update(format!("{:?}", self.variance).as_bytes());
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::GaussianNoiseSource;
    use crate::tensor::Shape;

    fn schedule() -> Schedule {
        Schedule::linear(250).unwrap()
    }

    #[test]
    fn standard_normal_posterior_is_scaled_input() {
        let s = schedule();
        let m = GmmModel::standard_normal();
        let x = GaussianNoiseSource::new(0, 0).tensor(Shape::vector(5));
        for t in [1, 10, 125, 250] {
            let post = gmm_posterior_mean(&m, &x, t, &s).unwrap();
            let eps = analytic_gmm_epsilon(&m, &x, t, &s, VarianceMode::FixedBeta).unwrap();
            let sa = s.alpha_bar(t).sqrt();
            let sn = (1.0 - s.alpha_bar(t)).sqrt();
            for i in 0..5 {
                let xi = x.as_slice()[i];
                assert!((post.as_slice()[i] - sa * xi).abs() < 1e-12);
                assert!((eps.epsilon.as_slice()[i] - sn * xi).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tiny_sigma_at_low_noise_returns_input() {
        let s = schedule();
        let m = GmmModel::new(vec![0.5, 0.5], vec![vec![0.3], vec![-0.7]], vec![1e-9, 1e-9]).unwrap();
        // with ᾱ_1 ≈ 1 and a point mass prior, E[x0|x_t] snaps to the nearest mean
        let x = Tensor::scalar(0.3 * s.alpha_bar(1).sqrt());
        let post = gmm_posterior_mean(&m, &x, 1, &s).unwrap();
        assert!((post.as_slice()[0] - 0.3).abs() < 1e-6);
        let eps = analytic_gmm_epsilon(&m, &x, 1, &s, VarianceMode::FixedBeta).unwrap();
        assert!(eps.epsilon.as_slice()[0].abs() < 1e-6);
    }

    /// ∫ x0 q(x0 | x_t) dx0 by dense trapezoid quadrature.
    fn quadrature_posterior(m: &GmmModel, x: f64, ab: f64) -> f64 {
        let (lo, hi, n) = (-3.0, 3.0, 600_000);
        let h = (hi - lo) / n as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..=n {
            let x0 = lo + i as f64 * h;
            let prior: f64 = (0..m.components())
                .map(|k| {
                    let s = m.sigmas()[k];
                    let mu = m.mean(k, 0);
                    m.weights()[k] * (-(x0 - mu).powi(2) / (2.0 * s * s)).exp() / s
                })
                .sum();
            let lik = (-(x - ab.sqrt() * x0).powi(2) / (2.0 * (1.0 - ab))).exp();
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            num += w * x0 * prior * lik;
            den += w * prior * lik;
        }
        num / den
    }

    #[test]
    fn two_component_posterior_matches_quadrature() {
        let s = schedule();
        let m = GmmModel::new(vec![0.5, 0.5], vec![vec![1.0], vec![-1.0]], vec![0.1, 0.1]).unwrap();
        for &(t, x) in &[(5, 0.9), (50, 0.2), (120, -0.4), (200, 0.05), (250, 1.3)] {
            let post = gmm_posterior_mean(&m, &Tensor::scalar(x), t, &s).unwrap().as_slice()[0];
            let oracle = quadrature_posterior(&m, x, s.alpha_bar(t));
            assert!((post - oracle).abs() < 1e-6, "t={t} x={x}: {post} vs {oracle}");
        }
    }

    #[test]
    fn reconstruction_identity() {
        let s = schedule();
        let m = GmmModel::new(vec![0.2, 0.8], vec![vec![1.0, -1.0], vec![-0.5, 0.25]], vec![0.3, 0.6]).unwrap();
        let mut src = GaussianNoiseSource::new(9, 0);
        for t in [1, 3, 77, 250] {
            let x = src.tensor(Shape::vector(2));
            let post = gmm_posterior_mean(&m, &x, t, &s).unwrap();
            let eps = analytic_gmm_epsilon(&m, &x, t, &s, VarianceMode::FixedBeta).unwrap().epsilon;
            let back = post.scaled_add(s.alpha_bar(t).sqrt(), &eps, (1.0 - s.alpha_bar(t)).sqrt()).unwrap();
            for (a, b) in back.as_slice().iter().zip(x.as_slice()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn huge_inputs_stay_finite() {
        let s = schedule();
        let m = GmmModel::new(vec![0.5, 0.5], vec![vec![1.0], vec![-1.0]], vec![0.01, 0.01]).unwrap();
        for x in [1e6, -1e6, 3.3e5] {
            for t in [1, 250] {
                let post = gmm_posterior_mean(&m, &Tensor::vector(vec![x, -x]), t, &s).unwrap();
                assert!(post.is_finite());
            }
        }
    }

    #[test]
    fn validation() {
        assert!(GmmModel::new(vec![0.5, 0.4], vec![vec![0.0], vec![1.0]], vec![1.0, 1.0]).is_err());
        assert!(GmmModel::new(vec![1.0], vec![vec![0.0]], vec![0.0]).is_err());
        assert!(GmmModel::new(vec![0.5, 0.5], vec![vec![0.0, 1.0], vec![1.0, 2.0, 3.0]], vec![1.0, 1.0]).is_err());
        let m = GmmModel::new(vec![1.0], vec![vec![0.0, 1.0]], vec![1.0]).unwrap();
        assert!(gmm_posterior_mean(&m, &Tensor::vector(vec![0.0; 3]), 1, &schedule()).is_err());
        assert!(
            analytic_gmm_epsilon(&m, &Tensor::vector(vec![0.0; 2]), 0, &schedule(), VarianceMode::FixedBeta).is_err()
        );
    }

    #[test]
    fn json_shape() {
        let m: GmmModel = serde_json::from_str(r#"{"weights":[1.0],"means":[[0.0]],"sigma":[1.0]}"#).unwrap();
        assert_eq!(m, GmmModel::standard_normal());
        assert!(serde_json::from_str::<GmmModel>(r#"{"weights":[0.7],"means":[[0.0]],"sigma":[1.0]}"#).is_err());
    }
}
