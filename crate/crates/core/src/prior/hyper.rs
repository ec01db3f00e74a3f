//! Hyperpriors and the unconstrained coordinates the sampler moves in.
//!
//! `tau` and each `sigma2_p` are sampled as logs; each length-scale as
//! `lambda_p` with `l_p = l_min + exp(lambda_p)`. Log-Jacobians are included
//! in [`log_hyperprior`].

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::treeio::config::PriorSettings;

use super::kernel::KernelParams;

/// Inverse-gamma log-density with shape `a` and scale `b`.
pub fn log_inv_gamma(x: f64, shape: f64, scale: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

/// Exponential log-density with the given rate.
pub fn log_exponential(x: f64, rate: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    rate.ln() - rate * x
}

/// Hyperparameters in sampling coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperState {
    pub log_tau: f64,
    pub log_sigma2: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl HyperState {
    /// `tau`, and unit scale / unit excess length-scale for `p` covariates.
    pub fn initial(p: usize, tau: f64) -> Self {
        Self {
            log_tau: tau.ln(),
            log_sigma2: vec![0.0; p],
            lambda: vec![0.0; p],
        }
    }

    pub fn covariates(&self) -> usize {
        self.log_sigma2.len()
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    pub fn sigma2(&self, p: usize) -> f64 {
        self.log_sigma2[p].exp()
    }

    pub fn lengthscale(&self, p: usize, lengthscale_min: f64) -> f64 {
        lengthscale_min + self.lambda[p].exp()
    }

    pub fn kernel_params(&self, lengthscale_min: f64) -> KernelParams {
        KernelParams {
            sigma2: self.log_sigma2.iter().map(|v| v.exp()).collect(),
            lengthscale: (0..self.covariates())
                .map(|p| self.lengthscale(p, lengthscale_min))
                .collect(),
        }
    }

    /// Flattened `(log tau, log sigma2_1.., lambda_1..)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.log_tau];
        v.extend(&self.log_sigma2);
        v.extend(&self.lambda);
        v
    }

    pub fn from_vec(v: &[f64]) -> Result<Self> {
        if v.is_empty() || v.len() % 2 == 0 {
            return Err(Error::Dimension(format!("hyperparameter vector of length {}", v.len())));
        }
        let p = (v.len() - 1) / 2;
        Ok(Self {
            log_tau: v[0],
            log_sigma2: v[1..1 + p].to_vec(),
            lambda: v[1 + p..].to_vec(),
        })
    }
}

/// Log prior of `tau` in log coordinates (density plus `log tau` Jacobian).
pub fn log_tau_prior(log_tau: f64, s: &PriorSettings) -> f64 {
    log_inv_gamma(log_tau.exp(), s.tau_shape, s.tau_scale) + log_tau
}

/// Log prior of `sigma2_p` in log coordinates.
pub fn log_sigma2_prior(log_sigma2: f64, s: &PriorSettings) -> f64 {
    log_exponential(log_sigma2.exp(), s.sigma2_rate) + log_sigma2
}

/// Log prior of the length-scale excess `l - l_min = exp(lambda)`, in `lambda`.
pub fn log_lambda_prior(lambda: f64, s: &PriorSettings) -> f64 {
    log_exponential(lambda.exp(), s.lengthscale_rate) + lambda
}

/// Sum of all hyperpriors in sampling coordinates.
pub fn log_hyperprior(h: &HyperState, s: &PriorSettings) -> f64 {
    log_tau_prior(h.log_tau, s)
        + h.log_sigma2.iter().map(|&v| log_sigma2_prior(v, s)).sum::<f64>()
        + h.lambda.iter().map(|&v| log_lambda_prior(v, s)).sum::<f64>()
}
