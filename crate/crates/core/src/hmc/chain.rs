//! One MCMC iteration: an HMC move on the latent block followed by a sweep of
//! slice moves over the hyperparameters.
//!
//! Position layout for HMC is `[theta | g | z_missing]`, or `[theta | u]` in
//! whitened mode where `g = L u` and `L` is the kernel Cholesky factor. In
//! whitened mode the kernel hyperparameters and imputed covariates are
//! slice-sampled with `u` held fixed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::adapt::DualAveraging;
use super::integrator::{hmc_transition, jittered_steps, Point, Target, TransitionInfo};
use super::mass::{build_mass_matrix, MassMatrix};
use super::slice::slice_sample;
use crate::coalescent::grad_log_likelihood;
use crate::coalescent::log_likelihood;
use crate::error::{Error, Result};
use crate::prior::hyper::{log_lambda_prior, log_sigma2_prior, log_tau_prior};
use crate::prior::{
    field_terms, gmrf_log_density, gp_log_density, missing_covariate_prior, GpFactor, HyperState, LatentState,
    Model, PosteriorTerms,
};
use crate::treeio::config::{ChainSettings, HmcSettings};

/// Initial bracket width for every slice move.
const SLICE_WIDTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    m: usize,
    gp: bool,
    whiten: bool,
    /// Imputed covariates carried in the HMC position.
    z_in_position: usize,
}

impl Layout {
    fn of(model: &Model) -> Self {
        let gp = model.has_gp();
        let whiten = gp && model.settings().whiten;
        Self {
            m: model.intervals(),
            gp,
            whiten,
            z_in_position: if gp && !whiten { model.missing_count() } else { 0 },
        }
    }

    fn dim(&self) -> usize {
        self.m + if self.gp { self.m } else { 0 } + self.z_in_position
    }

    fn tail(&self) -> usize {
        self.dim() - self.m
    }
}

/// The latent block as an HMC target, hyperparameters held fixed.
pub struct LatentTarget<'a> {
    model: &'a Model,
    hyper: HyperState,
    layout: Layout,
    /// Kernel factor when it does not depend on the position.
    factor: Option<GpFactor>,
    z_fixed: Vec<f64>,
}

impl<'a> LatentTarget<'a> {
    pub fn new(model: &'a Model, state: &LatentState) -> Result<Self> {
        let layout = Layout::of(model);
        let factor = if layout.z_in_position == 0 {
            model.factor(&state.hyper, &state.z_missing)?
        } else {
            None
        };
        Ok(Self {
            model,
            hyper: state.hyper.clone(),
            layout,
            factor,
            z_fixed: state.z_missing.clone(),
        })
    }

    pub fn encode(&self, state: &LatentState) -> Vec<f64> {
        let mut q = state.theta.clone();
        if self.layout.gp {
            if self.layout.whiten {
                q.extend(self.factor.as_ref().expect("whitened mode has a factor").solve_lower(&state.g));
            } else {
                q.extend(&state.g);
            }
        }
        if self.layout.z_in_position > 0 {
            q.extend(&state.z_missing);
        }
        q
    }

    /// Write the latent block of `q` back into `state`.
    pub fn decode(&self, q: &[f64], state: &mut LatentState) {
        let m = self.layout.m;
        state.theta.copy_from_slice(&q[..m]);
        if self.layout.gp {
            if self.layout.whiten {
                state.g = self.factor.as_ref().expect("whitened mode has a factor").mul_lower(&q[m..2 * m]);
            } else {
                state.g.copy_from_slice(&q[m..2 * m]);
            }
        }
        if self.layout.z_in_position > 0 {
            state.z_missing.copy_from_slice(&q[2 * m..]);
        }
    }

    fn evaluate_whitened(&self, q: &[f64]) -> Result<(f64, Vec<f64>)> {
        let m = self.layout.m;
        let factor = self.factor.as_ref().expect("whitened mode has a factor");
        let theta = &q[..m];
        let u = &q[m..];
        let g = factor.mul_lower(u);
        let eps: Vec<f64> = theta.iter().zip(&g).map(|(t, g)| t - g).collect();
        let (gmrf, level, d_eps) = field_terms(&eps, self.hyper.tau(), self.model.settings().level_precision)?;
        let ll = log_likelihood(self.model.data(), theta)?;
        let uu: f64 = u.iter().map(|x| x * x).sum();
        let mut grad = grad_log_likelihood(self.model.data(), theta)?;
        for (g, d) in grad.iter_mut().zip(&d_eps) {
            *g += d;
        }
        let neg: Vec<f64> = d_eps.iter().map(|d| -d).collect();
        grad.extend(factor.mul_lower_transpose(&neg).iter().zip(u).map(|(a, u)| a - u));
        Ok((ll + gmrf + level - 0.5 * uu, grad))
    }
}

impl Target for LatentTarget<'_> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn evaluate(&self, q: &[f64]) -> Result<(f64, Vec<f64>)> {
        if self.layout.whiten {
            return self.evaluate_whitened(q);
        }
        let m = self.layout.m;
        let mut state = LatentState {
            theta: q[..m].to_vec(),
            g: if self.layout.gp { q[m..2 * m].to_vec() } else { vec![0.0; m] },
            hyper: self.hyper.clone(),
            z_missing: if self.layout.z_in_position > 0 {
                q[2 * m..].to_vec()
            } else {
                self.z_fixed.clone()
            },
        };
        let owned;
        let factor = if self.layout.z_in_position > 0 {
            owned = self.model.factor(&state.hyper, &state.z_missing)?;
            owned.as_ref()
        } else {
            self.factor.as_ref()
        };
        let lp = self.model.terms_with(&state, factor)?.total();
        let grad = self.model.gradient_with(&state, factor)?;
        state.theta = grad.theta;
        if self.layout.gp {
            state.theta.extend(grad.g);
        }
        if self.layout.z_in_position > 0 {
            state.theta.extend(grad.z_missing);
        }
        Ok((lp, state.theta))
    }
}

/// Full state of one chain; sufficient for bit-exact continuation.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub latent: LatentState,
    pub step_size: f64,
    pub adapt: DualAveraging,
    pub mass: MassMatrix,
    /// Completed iterations, warmup included.
    pub iteration: u64,
    pub rng: ChaCha20Rng,
    pub seed: u64,
    pub stream: u64,
    pub accepted: u64,
    pub divergent: u64,
}

/// Outcome of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub iteration: u64,
    pub warmup: bool,
    pub transition: TransitionInfo,
    pub terms: PosteriorTerms,
    pub exhausted_slices: usize,
}

/// Deterministic generator for chain `stream` of a run seeded with `seed`.
pub fn chain_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub struct Sampler<'a> {
    model: &'a Model,
    hmc: HmcSettings,
    chain: ChainSettings,
}

impl<'a> Sampler<'a> {
    pub fn new(model: &'a Model, hmc: HmcSettings, chain: ChainSettings) -> Result<Self> {
        if !(hmc.step_size > 0.0) {
            return Err(Error::InvalidParameter(format!("step size {}", hmc.step_size)));
        }
        if hmc.leapfrog_steps == 0 || hmc.mass_refresh == 0 {
            return Err(Error::InvalidParameter("leapfrog steps and mass refresh must be >= 1".into()));
        }
        Ok(Self { model, hmc, chain })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn hmc_settings(&self) -> &HmcSettings {
        &self.hmc
    }

    pub fn chain_settings(&self) -> &ChainSettings {
        &self.chain
    }

    pub fn total_iterations(&self) -> u64 {
        (self.chain.warmup + self.chain.iterations) as u64
    }

    fn mass_for(&self, latent: &LatentState) -> Result<MassMatrix> {
        let tail = Layout::of(self.model).tail();
        build_mass_matrix(
            &latent.theta,
            &self.model.data().total_durations(),
            latent.hyper.tau(),
            self.model.settings().level_precision,
            self.hmc.preconditioning,
            tail,
        )
    }

    pub fn init_chain(&self, latent: LatentState, seed: u64, stream: u64) -> Result<ChainState> {
        self.model.terms(&latent)?.checked_total()?;
        Ok(ChainState {
            mass: self.mass_for(&latent)?,
            latent,
            step_size: self.hmc.step_size,
            adapt: DualAveraging::new(self.hmc.step_size, self.hmc.target_accept),
            iteration: 0,
            rng: chain_rng(seed, stream),
            seed,
            stream,
            accepted: 0,
            divergent: 0,
        })
    }

    /// Advance the chain by one iteration.
    pub fn step(&self, st: &mut ChainState) -> Result<StepRecord> {
        let warmup = st.iteration < self.chain.warmup as u64;
        if warmup && st.iteration % self.hmc.mass_refresh as u64 == 0 {
            st.mass = self.mass_for(&st.latent)?;
        }

        let target = LatentTarget::new(self.model, &st.latent)?;
        let current = Point::new(&target, target.encode(&st.latent))?;
        let n_steps = jittered_steps(self.hmc.leapfrog_steps, self.hmc.steps_jitter, &mut st.rng);
        let (next, info) = hmc_transition(&target, &current, st.step_size, n_steps, &st.mass, &mut st.rng)?;
        target.decode(&next.q, &mut st.latent);
        st.accepted += info.accepted as u64;
        st.divergent += info.divergent as u64;

        if warmup {
            st.step_size = st.adapt.update(info.accept_prob);
            if st.iteration + 1 == self.chain.warmup as u64 {
                st.step_size = st.adapt.final_step();
            }
        }

        let exhausted_slices = self.hyper_sweep(st)?;
        let terms = self.model.terms(&st.latent)?;
        terms.checked_total()?;
        st.iteration += 1;
        Ok(StepRecord {
            iteration: st.iteration,
            warmup,
            transition: info,
            terms,
            exhausted_slices,
        })
    }

    /// Slice moves on `log tau` (centered, then non-centered), each
    /// `log sigma2_p` and `lambda_p`, then (in
    /// whitened mode) each imputed covariate. Returns the number of moves that
    /// ran out of shrinks.
    fn hyper_sweep(&self, st: &mut ChainState) -> Result<usize> {
        let model = self.model;
        let settings = model.settings();
        let mut exhausted = 0;
        let latent = &mut st.latent;
        let eps: Vec<f64> = latent.theta.iter().zip(&latent.g).map(|(t, g)| t - g).collect();

        let tau_cond = |x: f64| match gmrf_log_density(&eps, x.exp()) {
            Ok(v) => v + log_tau_prior(x, settings),
            Err(_) => f64::NEG_INFINITY,
        };
        let x0 = latent.hyper.log_tau;
        let out = slice_sample(x0, tau_cond(x0), SLICE_WIDTH, &mut st.rng, tau_cond);
        latent.hyper.log_tau = out.value;
        exhausted += out.exhausted as usize;

        // With eps held fixed tau can barely move when the data pin the
        // increments of eps near zero (a funnel). The second move holds
        // sqrt(tau) * (eps - eps_1) fixed, keeps the level eps_1, and lets theta
        // rescale with tau; -((M-1)/2) log tau is the Jacobian.
        let g = latent.g.clone();
        let root_tau = latent.hyper.tau().sqrt();
        let level = eps[0];
        let scaled: Vec<f64> = eps.iter().map(|e| (e - level) * root_tau).collect();
        let half_rank = 0.5 * (eps.len() - 1) as f64;
        let rescale = |x: f64| -> (Vec<f64>, Vec<f64>) {
            let s = (-0.5 * x).exp();
            let eps: Vec<f64> = scaled.iter().map(|e| level + e * s).collect();
            (g.iter().zip(&eps).map(|(g, e)| g + e).collect(), eps)
        };
        let nc_cond = |x: f64| {
            let (theta, eps) = rescale(x);
            match (log_likelihood(model.data(), &theta), field_terms(&eps, x.exp(), settings.level_precision)) {
                (Ok(lik), Ok((gmrf, level, _))) => lik + gmrf + level + log_tau_prior(x, settings) - half_rank * x,
                _ => f64::NEG_INFINITY,
            }
        };
        let x0 = latent.hyper.log_tau;
        let out = slice_sample(x0, nc_cond(x0), SLICE_WIDTH, &mut st.rng, nc_cond);
        if out.value != x0 {
            latent.theta = rescale(out.value).0;
            latent.hyper.log_tau = out.value;
        }
        exhausted += out.exhausted as usize;

        if !model.has_gp() {
            return Ok(exhausted);
        }

        // Centered moves hold g fixed and score N(g; 0, K). In whitened mode the
        // moves are non-centered: u = L^{-1} g is held fixed, g follows the
        // kernel, and the GMRF error term scores the result.
        let whiten = settings.whiten;
        let theta = latent.theta.clone();
        let tau = latent.hyper.tau();
        let u = if whiten {
            match model.factor(&latent.hyper, &latent.z_missing)? {
                Some(f) => f.solve_lower(&latent.g),
                None => return Ok(exhausted),
            }
        } else {
            Vec::new()
        };
        let g_fixed = latent.g.clone();
        let field = |hyper: &HyperState, z: &[f64]| -> f64 {
            let f = match model.factor(hyper, z) {
                Ok(Some(f)) => f,
                _ => return f64::NEG_INFINITY,
            };
            if whiten {
                let g = f.mul_lower(&u);
                let eps: Vec<f64> = theta.iter().zip(&g).map(|(t, g)| t - g).collect();
                field_terms(&eps, tau, settings.level_precision).map_or(f64::NEG_INFINITY, |(a, b, _)| a + b)
            } else {
                gp_log_density(&g_fixed, &f).map_or(f64::NEG_INFINITY, |d| d.log_density)
            }
        };

        for p in 0..model.covariate_count() {
            let mut h = latent.hyper.clone();
            let z = latent.z_missing.clone();
            let mut cond = |x: f64| {
                h.log_sigma2[p] = x;
                field(&h, &z) + log_sigma2_prior(x, settings)
            };
            let x0 = latent.hyper.log_sigma2[p];
            let f0 = cond(x0);
            let out = slice_sample(x0, f0, SLICE_WIDTH, &mut st.rng, cond);
            exhausted += out.exhausted as usize;
            latent.hyper.log_sigma2[p] = out.value;

            let mut h = latent.hyper.clone();
            let mut cond = |x: f64| {
                h.lambda[p] = x;
                field(&h, &z) + log_lambda_prior(x, settings)
            };
            let x0 = latent.hyper.lambda[p];
            let f0 = cond(x0);
            let out = slice_sample(x0, f0, SLICE_WIDTH, &mut st.rng, cond);
            exhausted += out.exhausted as usize;
            latent.hyper.lambda[p] = out.value;
        }

        if whiten {
            let mut offset = 0;
            for block in model.blocks() {
                for i in 0..block.len {
                    let idx = offset + i;
                    let hyper = latent.hyper.clone();
                    let mut z = latent.z_missing.clone();
                    let mut cond = |x: f64| {
                        z[idx] = x;
                        let rw = missing_covariate_prior(&z[offset..offset + block.len], block.anchor, settings.missing_precision)
                            .map_or(f64::NEG_INFINITY, |r| r.0);
                        field(&hyper, &z) + rw
                    };
                    let x0 = latent.z_missing[idx];
                    let f0 = cond(x0);
                    let out = slice_sample(x0, f0, SLICE_WIDTH, &mut st.rng, cond);
                    exhausted += out.exhausted as usize;
                    latent.z_missing[idx] = out.value;
                }
                offset += block.len;
            }
            if let Some(f) = model.factor(&latent.hyper, &latent.z_missing)? {
                latent.g = f.mul_lower(&u);
            }
        }
        Ok(exhausted)
    }
}
