//! Diagonal-Gaussian utilities: closed-form KL, reparametrised sampling,
//! log-densities, and the Monte-Carlo KL against an equal-weight mixture used
//! for the ANY label.
//!
//! KL is always taken as `KL(q || p)` with `q` the encoder posterior.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub(crate) const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("log-variance must be finite, got {0}")]
    NonFiniteLogvar(f64),
    #[error("Monte-Carlo estimate needs at least one sample")]
    NoSamples,
    #[error("a mixture needs at least one component")]
    EmptyMixture,
}

/// Closed-form KL between two univariate Gaussians given by log-variances.
pub(crate) fn kl_1d(q_mean: f64, q_logvar: f64, p_mean: f64, p_logvar: f64) -> f64 {
    let d = q_mean - p_mean;
    0.5 * (p_logvar - q_logvar + (q_logvar.exp() + d * d) / p_logvar.exp() - 1.0)
}

/// Univariate Gaussian parametrised by mean and natural-log variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaussian1d {
    pub mean: f64,
    pub logvar: f64,
}

impl Gaussian1d {
    pub const STANDARD: Self = Self { mean: 0.0, logvar: 0.0 };

    pub fn new(mean: f64, logvar: f64) -> Self {
        Self { mean, logvar }
    }

    pub fn variance(&self) -> f64 {
        self.logvar.exp()
    }

    pub fn std_dev(&self) -> f64 {
        (0.5 * self.logvar).exp()
    }

    /// `-1/2 log(2 pi sigma^2) - (z - mu)^2 / (2 sigma^2)`
    pub fn log_pdf(&self, z: f64) -> f64 {
        let d = z - self.mean;
        -HALF_LN_2PI - 0.5 * self.logvar - 0.5 * d * d * (-self.logvar).exp()
    }

    pub fn kl(&self, prior: &Gaussian1d) -> f64 {
        kl_1d(self.mean, self.logvar, prior.mean, prior.logvar)
    }
}

pub fn log_pdf(g: &Gaussian1d, z: f64) -> f64 {
    g.log_pdf(z)
}

/// Gaussian with diagonal covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    logvar: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, logvar: Vec<f64>) -> Result<Self, GaussianError> {
        if mean.len() != logvar.len() {
            return Err(GaussianError::Dimension(mean.len(), logvar.len()));
        }
        if let Some(&bad) = logvar.iter().find(|v| !v.is_finite()) {
            return Err(GaussianError::NonFiniteLogvar(bad));
        }
        Ok(Self { mean, logvar })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            logvar: vec![0.0; dim],
        }
    }

    pub fn from_marginals(marginals: &[Gaussian1d]) -> Self {
        Self {
            mean: marginals.iter().map(|g| g.mean).collect(),
            logvar: marginals.iter().map(|g| g.logvar).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn logvar(&self) -> &[f64] {
        &self.logvar
    }

    pub fn marginal(&self, i: usize) -> Gaussian1d {
        Gaussian1d::new(self.mean[i], self.logvar[i])
    }

    pub fn marginals(&self) -> impl Iterator<Item = Gaussian1d> + '_ {
        (0..self.dim()).map(|i| self.marginal(i))
    }
}

/// Closed-form `KL(q || p)` summed over dimensions.
pub fn kl_diag(q: &DiagGaussian, p: &DiagGaussian) -> Result<f64, GaussianError> {
    if q.dim() != p.dim() {
        return Err(GaussianError::Dimension(q.dim(), p.dim()));
    }
    Ok(q.marginals().zip(p.marginals()).map(|(a, b)| a.kl(&b)).sum())
}

/// `z_i = mu_i + exp(logvar_i / 2) * eps_i`.
pub fn reparam_sample(q: &DiagGaussian, eps: &[f64]) -> Result<Vec<f64>, GaussianError> {
    if eps.len() != q.dim() {
        return Err(GaussianError::Dimension(q.dim(), eps.len()));
    }
    Ok(q.marginals().zip(eps).map(|(g, e)| g.mean + g.std_dev() * e).collect())
}

/// Equal-weight mixture of univariate Gaussians.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    components: Vec<Gaussian1d>,
}

impl GaussianMixture {
    pub fn new(components: Vec<Gaussian1d>) -> Result<Self, GaussianError> {
        if components.is_empty() {
            return Err(GaussianError::EmptyMixture);
        }
        if let Some(bad) = components.iter().find(|c| !c.logvar.is_finite()) {
            return Err(GaussianError::NonFiniteLogvar(bad.logvar));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[Gaussian1d] {
        &self.components
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.components.len() as f64
    }

    /// `log (1/K sum_k N(z; mu_k, sigma_k^2))` via log-sum-exp.
    pub fn log_pdf(&self, z: f64) -> f64 {
        let max = self
            .components
            .iter()
            .map(|c| c.log_pdf(z))
            .fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = self.components.iter().map(|c| (c.log_pdf(z) - max).exp()).sum();
        max + total.ln() - (self.components.len() as f64).ln()
    }
}

/// Monte-Carlo estimate with its empirical standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// `KL(q || m) ~= 1/n sum_s [log q(z_s) - log m(z_s)]` with `z_s ~ q`.
pub fn kl_mc_mixture(
    q: &Gaussian1d,
    m: &GaussianMixture,
    n: usize,
    rng: &mut impl Rng,
) -> Result<McEstimate, GaussianError> {
    if n == 0 {
        return Err(GaussianError::NoSamples);
    }
    let eps: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Ok(kl_mc_mixture_with_noise(q, m, &eps))
}

/// Deterministic core of [`kl_mc_mixture`] for a fixed noise vector.
pub fn kl_mc_mixture_with_noise(q: &Gaussian1d, m: &GaussianMixture, eps: &[f64]) -> McEstimate {
    let terms: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let z = q.mean + q.std_dev() * e;
            q.log_pdf(z) - m.log_pdf(z)
        })
        .collect();
    let n = terms.len() as f64;
    let estimate = terms.iter().sum::<f64>() / n;
    let var = if terms.len() > 1 {
        terms.iter().map(|t| (t - estimate).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    McEstimate {
        estimate,
        std_error: (var / n).sqrt(),
        samples: terms.len(),
    }
}
