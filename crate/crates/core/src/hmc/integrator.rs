//! Leapfrog integration and the Metropolis-corrected HMC transition.

use rand::Rng;

use super::mass::MassMatrix;
use crate::error::{Error, Result};

/// Energy error beyond which a trajectory counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// A differentiable log-density over a flat position vector.
pub trait Target {
    fn dim(&self) -> usize;
    /// `(log density, gradient)`; errors are treated as divergence by the integrator.
    fn evaluate(&self, q: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// A position with its cached log-density and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub q: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
}

impl Point {
    pub fn new<T: Target + ?Sized>(target: &T, q: Vec<f64>) -> Result<Self> {
        let (log_density, grad) = target.evaluate(&q)?;
        Ok(Self { q, log_density, grad })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub end: Point,
    pub p: Vec<f64>,
    /// A non-finite value or evaluation failure stopped integration early.
    pub failed: bool,
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

/// `n_steps` leapfrog steps of size `eps`: half momentum step, then
/// alternating full position and momentum steps, ending with a half step.
pub fn leapfrog<T: Target + ?Sized>(
    target: &T,
    start: &Point,
    p0: &[f64],
    eps: f64,
    n_steps: usize,
    mass: &MassMatrix,
) -> Trajectory {
    let mut q = start.q.clone();
    let mut p = p0.to_vec();
    let mut grad = start.grad.clone();
    let mut log_density = start.log_density;
    axpy(&mut p, 0.5 * eps, &grad);
    for step in 0..n_steps {
        let v = mass.inv_mul(&p);
        axpy(&mut q, eps, &v);
        match target.evaluate(&q) {
            Ok((lp, g)) if lp.is_finite() && g.iter().all(|x| x.is_finite()) => {
                log_density = lp;
                grad = g;
            }
            _ => {
                return Trajectory {
                    end: Point {
                        q,
                        log_density: f64::NEG_INFINITY,
                        grad,
                    },
                    p,
                    failed: true,
                }
            }
        }
        let scale = if step + 1 == n_steps { 0.5 } else { 1.0 };
        axpy(&mut p, scale * eps, &grad);
    }
    Trajectory {
        end: Point { q, log_density, grad },
        p,
        failed: false,
    }
}

/// Hamiltonian `-log pi(q) + p'M^{-1}p / 2`.
pub fn hamiltonian(point: &Point, p: &[f64], mass: &MassMatrix) -> f64 {
    -point.log_density + mass.kinetic(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionInfo {
    pub accepted: bool,
    pub divergent: bool,
    pub accept_prob: f64,
    pub energy_error: f64,
}

/// One HMC transition; returns the new point (the old one on rejection).
pub fn hmc_transition<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    current: &Point,
    eps: f64,
    n_steps: usize,
    mass: &MassMatrix,
    rng: &mut R,
) -> Result<(Point, TransitionInfo)> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {eps}")));
    }
    if n_steps == 0 {
        return Err(Error::InvalidParameter("leapfrog steps must be at least 1".into()));
    }
    let p0 = mass.sample_momentum(rng);
    let h0 = hamiltonian(current, &p0, mass);
    let traj = leapfrog(target, current, &p0, eps, n_steps, mass);
    let h1 = if traj.failed {
        f64::INFINITY
    } else {
        hamiltonian(&traj.end, &traj.p, mass)
    };
    let dh = h1 - h0;
    let divergent = !dh.is_finite() || dh.abs() > DIVERGENCE_THRESHOLD;
    let accept_prob = if divergent { 0.0 } else { (-dh).exp().min(1.0) };
    // Always draw the uniform so the stream position does not depend on the outcome.
    let u: f64 = rng.random();
    let accepted = !divergent && u < accept_prob;
    let info = TransitionInfo {
        accepted,
        divergent,
        accept_prob,
        energy_error: dh,
    };
    Ok((if accepted { traj.end } else { current.clone() }, info))
}

/// Log acceptance ratio of moving from `(a, pa)` to `(b, pb)`.
pub fn log_accept_ratio(a: &Point, pa: &[f64], b: &Point, pb: &[f64], mass: &MassMatrix) -> f64 {
    hamiltonian(a, pa, mass) - hamiltonian(b, pb, mass)
}

/// Trajectory length jittered uniformly by `±jitter` relative, at least 1.
pub fn jittered_steps<R: Rng + ?Sized>(base: usize, jitter: f64, rng: &mut R) -> usize {
    let f: f64 = rng.random_range(-1.0..=1.0);
    ((base as f64) * (1.0 + jitter * f)).round().max(1.0) as usize
}
