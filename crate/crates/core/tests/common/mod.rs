//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use coalgp::coalescent::Grid;
use coalgp::hmc::Target;
use coalgp::simulate::{simulate_tree_with, PiecewiseNe, Schedule};
use coalgp::treeio::TimeTree;
use coalgp::Result;
use nalgebra::DMatrix;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Sorted random grid points in `(lo, hi)`; `intervals` is the interval count.
pub fn random_grid<R: Rng>(rng: &mut R, intervals: usize, lo: f64, hi: f64) -> Grid {
    let mut pts: Vec<f64> = (0..intervals - 1).map(|_| rng.random_range(lo..hi)).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    Grid::from_points(pts).unwrap()
}

/// Tips spread over up to `times` sampling times (the first at 0).
pub fn random_schedule<R: Rng>(rng: &mut R, tips: usize, times: usize, span: f64) -> Schedule {
    let times = times.clamp(1, tips);
    let mut groups = vec![(0.0, 1)];
    for _ in 1..times {
        groups.push((rng.random_range(0.0..span), 0));
    }
    for _ in 1..tips {
        let i = rng.random_range(0..groups.len());
        groups[i].1 += 1;
    }
    Schedule::new(groups).unwrap()
}

/// A heterochronous tree simulated under a random piecewise-constant size.
pub fn random_tree<R: Rng>(rng: &mut R, max_tips: usize) -> TimeTree {
    let n = rng.random_range(2..=max_tips);
    let schedule = random_schedule(rng, n, 3, 1.5);
    let m = rng.random_range(2..=4);
    let grid = random_grid(rng, m, 0.1, 2.5);
    let levels: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    simulate_tree_with(&schedule, &PiecewiseNe::from_log(grid, &levels).unwrap(), rng).unwrap()
}

/// `|a - b| <= tol * max(|b|, 1)`.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut a = x.to_vec();
    let mut b = x.to_vec();
    a[i] += h;
    b[i] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}

pub fn second_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut a = x.to_vec();
    let mut b = x.to_vec();
    a[i] += h;
    b[i] -= h;
    (f(&a) - 2.0 * f(x) + f(&b)) / (h * h)
}

/// Dense first-order random-walk structure matrix.
pub fn dense_structure(m: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(m, m);
    for i in 0..m - 1 {
        q[(i, i)] += 1.0;
        q[(i + 1, i + 1)] += 1.0;
        q[(i, i + 1)] -= 1.0;
        q[(i + 1, i)] -= 1.0;
    }
    q
}

/// Upper tail of the chi-squared goodness-of-fit test against equal bin probabilities.
pub fn chi2_uniform_p(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    ChiSquared::new((counts.len() - 1) as f64).unwrap().sf(stat)
}

/// One-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(samples: &[f64], cdf: &dyn Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
pub fn ks_p(samples: &[f64], cdf: &dyn Fn(f64) -> f64) -> f64 {
    let d = ks_statistic(samples, cdf);
    let en = (samples.len() as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let sign = if k as i64 % 2 == 1 { 1.0 } else { -1.0 };
        sum += 2.0 * sign * (-2.0 * k * k * lambda * lambda).exp();
    }
    sum.clamp(0.0, 1.0)
}

/// Zero-mean Gaussian with a dense precision matrix.
pub struct Gaussian {
    pub precision: DMatrix<f64>,
}

impl Gaussian {
    pub fn covariance(&self) -> DMatrix<f64> {
        self.precision.clone().try_inverse().unwrap()
    }
}

impl Target for Gaussian {
    fn dim(&self) -> usize {
        self.precision.nrows()
    }

    fn evaluate(&self, q: &[f64]) -> Result<(f64, Vec<f64>)> {
        let x = nalgebra::DVector::from_column_slice(q);
        let px = &self.precision * &x;
        Ok((-0.5 * x.dot(&px), px.iter().map(|v| -v).collect()))
    }
}

/// `tau Q + diag(d)`, the shape of the log-size block's curvature.
pub fn field_precision(tau: f64, d: &[f64]) -> DMatrix<f64> {
    let m = d.len();
    let mut p = dense_structure(m) * tau;
    for i in 0..m {
        p[(i, i)] += d[i];
    }
    p
}
