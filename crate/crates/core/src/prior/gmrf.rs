//! First-order intrinsic GMRF (random walk) on the grid.
//!
//! Structure matrix `Q` is tridiagonal with diagonal `(1, 2, ..., 2, 1)` and
//! off-diagonal `-1`, so `x'Qx = sum (x_k - x_{k-1})^2`. It is never stored
//! densely.

use crate::error::{Error, Result};

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("GMRF precision must be positive, got {tau}")))
    }
}

/// Diagonal and off-diagonal of `Q` for dimension `m`.
pub fn structure_bands(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut diag = vec![2.0; m];
    if m > 0 {
        diag[0] = 1.0;
        diag[m - 1] = 1.0;
    }
    if m == 1 {
        diag[0] = 0.0;
    }
    (diag, vec![-1.0; m.saturating_sub(1)])
}

/// `sum_{k>=2} (x_k - x_{k-1})^2`.
pub fn quadratic_form(x: &[f64]) -> f64 {
    x.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
}

/// `Q x` in O(M).
pub fn structure_mul(x: &[f64]) -> Vec<f64> {
    let m = x.len();
    let mut out = vec![0.0; m];
    for k in 1..m {
        let d = x[k] - x[k - 1];
        out[k] += d;
        out[k - 1] -= d;
    }
    out
}

/// `((M-1)/2) log tau - (tau/2) x'Qx`.
pub fn gmrf_log_density(x: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let rank = x.len().saturating_sub(1) as f64;
    Ok(0.5 * rank * tau.ln() - 0.5 * tau * quadratic_form(x))
}

/// `-tau Q x`.
pub fn gmrf_grad(x: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    Ok(structure_mul(x).into_iter().map(|v| -tau * v).collect())
}
