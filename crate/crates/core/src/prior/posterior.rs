//! Joint log-posterior over `(theta, g, hyperparameters, imputed covariates)`.
//!
//! The model is hierarchical: `theta = g + eps`, `eps` an intrinsic GMRF with
//! precision `tau`, `g ~ N(0, K(Z))`. Without covariates `g` is identically
//! zero and the model reduces to a plain GMRF smoother.

use nalgebra::DMatrix;

use super::gmrf::{gmrf_grad, gmrf_log_density};
use super::hyper::{log_hyperprior, HyperState};
use super::kernel::{gp_log_density, kernel_component, kernel_matrix, GpFactor};
use super::missing::{missing_blocks, missing_covariate_prior, MissingBlock};
use crate::coalescent::{grad_log_likelihood, log_likelihood, CoalescentData};
use crate::error::{Error, Result};
use crate::treeio::config::PriorSettings;
use crate::treeio::CovariateTable;

/// Everything that stays fixed during a run.
#[derive(Debug, Clone)]
pub struct Model {
    data: CoalescentData,
    covariates: CovariateTable,
    blocks: Vec<MissingBlock>,
    settings: PriorSettings,
}

/// The sampled quantities. `z_missing` concatenates the missing blocks in order.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub theta: Vec<f64>,
    pub g: Vec<f64>,
    pub hyper: HyperState,
    pub z_missing: Vec<f64>,
}

/// Individual log-density components; `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorTerms {
    pub log_likelihood: f64,
    pub gmrf: f64,
    pub level: f64,
    pub gp: f64,
    pub hyperprior: f64,
    pub missing: f64,
}

impl PosteriorTerms {
    pub fn total(&self) -> f64 {
        self.log_likelihood + self.gmrf + self.level + self.gp + self.hyperprior + self.missing
    }

    /// Total, or an error naming the first non-finite component.
    pub fn checked_total(&self) -> Result<f64> {
        let parts = [
            ("log-likelihood", self.log_likelihood),
            ("GMRF prior", self.gmrf),
            ("level prior", self.level),
            ("GP prior", self.gp),
            ("hyperprior", self.hyperprior),
            ("missing-covariate prior", self.missing),
        ];
        for (name, v) in parts {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{name} ({v})")));
            }
        }
        Ok(self.total())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointGradient {
    pub theta: Vec<f64>,
    pub g: Vec<f64>,
    pub z_missing: Vec<f64>,
}

/// GMRF plus optional level anchor on `eps = theta - g`: value and gradient in `eps`.
pub fn field_terms(eps: &[f64], tau: f64, level_precision: f64) -> Result<(f64, f64, Vec<f64>)> {
    let gmrf = gmrf_log_density(eps, tau)?;
    let mut grad = gmrf_grad(eps, tau)?;
    let mut level = 0.0;
    if level_precision > 0.0 {
        let e = eps[0];
        level = 0.5 * (level_precision / (2.0 * std::f64::consts::PI)).ln() - 0.5 * level_precision * e * e;
        grad[0] -= level_precision * e;
    }
    Ok((gmrf, level, grad))
}

impl Model {
    pub fn new(data: CoalescentData, covariates: CovariateTable, settings: PriorSettings) -> Result<Self> {
        if covariates.count() > 0 && covariates.intervals() != data.intervals() {
            return Err(Error::Dimension(format!(
                "covariates cover {} intervals, grid has {}",
                covariates.intervals(),
                data.intervals()
            )));
        }
        if !(settings.lengthscale_min >= 0.0) {
            return Err(Error::InvalidParameter("length-scale lower bound must be >= 0".into()));
        }
        if !(settings.level_precision >= 0.0) {
            return Err(Error::InvalidParameter("level precision must be >= 0".into()));
        }
        let blocks = missing_blocks(&covariates)?;
        Ok(Self {
            data,
            covariates,
            blocks,
            settings,
        })
    }

    pub fn data(&self) -> &CoalescentData {
        &self.data
    }

    pub fn covariates(&self) -> &CovariateTable {
        &self.covariates
    }

    pub fn settings(&self) -> &PriorSettings {
        &self.settings
    }

    pub fn blocks(&self) -> &[MissingBlock] {
        &self.blocks
    }

    pub fn intervals(&self) -> usize {
        self.data.intervals()
    }

    pub fn covariate_count(&self) -> usize {
        self.covariates.count()
    }

    pub fn has_gp(&self) -> bool {
        self.covariate_count() > 0
    }

    pub fn missing_count(&self) -> usize {
        self.blocks.iter().map(|b| b.len).sum()
    }

    /// A neutral starting point: flat `theta` at the pooled estimate, `g = 0`,
    /// `tau = 1`, imputed covariates at their anchors.
    pub fn initial_state(&self) -> LatentState {
        let m: f64 = self.data.total_counts().iter().sum();
        let w: f64 = self.data.total_durations().iter().sum();
        let level = if m > 0.0 && w > 0.0 { (w / m).ln() } else { 0.0 };
        LatentState {
            theta: vec![level; self.intervals()],
            g: vec![0.0; self.intervals()],
            hyper: HyperState::initial(self.covariate_count(), 1.0),
            z_missing: self
                .blocks
                .iter()
                .flat_map(|b| std::iter::repeat(b.anchor).take(b.len))
                .collect(),
        }
    }

    /// Covariate rows with the imputed values filled in.
    pub fn resolved_covariates(&self, z_missing: &[f64]) -> Vec<Vec<f64>> {
        let mut z: Vec<Vec<f64>> = self.covariates.values().to_vec();
        let mut offset = 0;
        for b in &self.blocks {
            z[b.covariate][b.intervals()].copy_from_slice(&z_missing[offset..offset + b.len]);
            offset += b.len;
        }
        z
    }

    /// Jittered kernel factor; `None` when there are no covariates.
    pub fn factor(&self, hyper: &HyperState, z_missing: &[f64]) -> Result<Option<GpFactor>> {
        if !self.has_gp() {
            return Ok(None);
        }
        let params = hyper.kernel_params(self.settings.lengthscale_min);
        let k = kernel_matrix(&self.resolved_covariates(z_missing), &params)?;
        let jitter = self.settings.jitter * params.sigma2.iter().sum::<f64>();
        GpFactor::new(&k, jitter).map(Some)
    }

    fn check(&self, s: &LatentState) -> Result<()> {
        let m = self.intervals();
        if s.theta.len() != m || s.g.len() != m {
            return Err(Error::Dimension(format!(
                "theta/g have lengths {}/{}, expected {m}",
                s.theta.len(),
                s.g.len()
            )));
        }
        if s.hyper.covariates() != self.covariate_count() {
            return Err(Error::Dimension("hyperparameters do not match covariate count".into()));
        }
        if s.z_missing.len() != self.missing_count() {
            return Err(Error::Dimension("imputed covariate count mismatch".into()));
        }
        if !self.has_gp() && s.g.iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidParameter("g must be zero without covariates".into()));
        }
        Ok(())
    }

    fn missing_prior(&self, z_missing: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut total = 0.0;
        let mut grad = Vec::with_capacity(z_missing.len());
        let mut offset = 0;
        for b in &self.blocks {
            let (v, g) = missing_covariate_prior(
                &z_missing[offset..offset + b.len],
                b.anchor,
                self.settings.missing_precision,
            )?;
            total += v;
            grad.extend(g);
            offset += b.len;
        }
        Ok((total, grad))
    }

    /// All terms, using a precomputed kernel factor for `(state.hyper, state.z_missing)`.
    pub fn terms_with(&self, s: &LatentState, factor: Option<&GpFactor>) -> Result<PosteriorTerms> {
        self.check(s)?;
        let eps: Vec<f64> = s.theta.iter().zip(&s.g).map(|(t, g)| t - g).collect();
        let (gmrf, level, _) = field_terms(&eps, s.hyper.tau(), self.settings.level_precision)?;
        let gp = match factor {
            Some(f) => gp_log_density(&s.g, f)?.log_density,
            None => 0.0,
        };
        Ok(PosteriorTerms {
            log_likelihood: log_likelihood(&self.data, &s.theta)?,
            gmrf,
            level,
            gp,
            hyperprior: log_hyperprior(&s.hyper, &self.settings),
            missing: self.missing_prior(&s.z_missing)?.0,
        })
    }

    pub fn terms(&self, s: &LatentState) -> Result<PosteriorTerms> {
        let f = self.factor(&s.hyper, &s.z_missing)?;
        self.terms_with(s, f.as_ref())
    }

    /// Gradient over `(theta, g, z_missing)` given the kernel factor.
    pub fn gradient_with(&self, s: &LatentState, factor: Option<&GpFactor>) -> Result<JointGradient> {
        self.check(s)?;
        let eps: Vec<f64> = s.theta.iter().zip(&s.g).map(|(t, g)| t - g).collect();
        let (_, _, d_eps) = field_terms(&eps, s.hyper.tau(), self.settings.level_precision)?;
        let lik = grad_log_likelihood(&self.data, &s.theta)?;
        let theta = lik.iter().zip(&d_eps).map(|(a, b)| a + b).collect();

        let Some(factor) = factor else {
            return Ok(JointGradient {
                theta,
                g: vec![0.0; self.intervals()],
                z_missing: Vec::new(),
            });
        };
        let alpha = factor.solve(&s.g);
        let g = d_eps.iter().zip(&alpha).map(|(d, a)| -d - a).collect();

        let (_, mut z_grad) = self.missing_prior(&s.z_missing)?;
        if !self.blocks.is_empty() {
            // d/dz_pi of the GP term: sum_j (alpha alpha' - K^{-1})_ij dK_ij/dz_pi.
            let kinv = factor.inverse();
            let a = DMatrix::from_fn(alpha.len(), alpha.len(), |i, j| alpha[i] * alpha[j] - kinv[(i, j)]);
            let z = self.resolved_covariates(&s.z_missing);
            let min = self.settings.lengthscale_min;
            let mut offset = 0;
            for b in &self.blocks {
                let p = b.covariate;
                let l = s.hyper.lengthscale(p, min);
                let kp = kernel_component(&z[p], s.hyper.sigma2(p), l)?;
                for (n, i) in b.intervals().enumerate() {
                    let mut acc = 0.0;
                    for j in 0..z[p].len() {
                        acc -= a[(i, j)] * kp[(i, j)] * (z[p][i] - z[p][j]) / (l * l);
                    }
                    z_grad[offset + n] += acc;
                }
                offset += b.len;
            }
        }
        Ok(JointGradient {
            theta,
            g,
            z_missing: z_grad,
        })
    }

    pub fn gradient(&self, s: &LatentState) -> Result<JointGradient> {
        let f = self.factor(&s.hyper, &s.z_missing)?;
        self.gradient_with(s, f.as_ref())
    }
}

pub fn joint_log_posterior(model: &Model, state: &LatentState) -> Result<f64> {
    model.terms(state)?.checked_total()
}

pub fn grad_joint(model: &Model, state: &LatentState) -> Result<JointGradient> {
    model.gradient(state)
}
