//! Piecewise-constant coalescent log-likelihood and its derivatives.
//!
//! Everything here is `O(M)` per locus once the ledgers exist. The Hessian is
//! diagonal, so only the diagonal is returned.

use super::ledger::{CoalescentData, EventKind};
use crate::error::{Error, Result};

fn check_len(data: &CoalescentData, theta: &[f64]) -> Result<()> {
    if theta.len() != data.intervals() {
        return Err(Error::Dimension(format!(
            "theta has length {} but the grid has {} intervals",
            theta.len(),
            data.intervals()
        )));
    }
    Ok(())
}

/// `sum_loci sum_k (-m_k theta_k - exp(-theta_k) w_k)`.
pub fn log_likelihood(data: &CoalescentData, theta: &[f64]) -> Result<f64> {
    check_len(data, theta)?;
    // Per-locus sums first, so the multilocus value is exactly the sum of loci.
    let per_locus = data.counts().iter().zip(data.durations()).map(|(m, w)| {
        let mut locus = 0.0;
        for k in 0..theta.len() {
            // Skip empty intervals so theta = +-inf does not produce NaN from 0 * inf.
            if m[k] != 0.0 {
                locus -= m[k] * theta[k];
            }
            if w[k] != 0.0 {
                locus -= (-theta[k]).exp() * w[k];
            }
        }
        locus
    });
    Ok(per_locus.sum())
}

pub fn grad_log_likelihood(data: &CoalescentData, theta: &[f64]) -> Result<Vec<f64>> {
    check_len(data, theta)?;
    let m = data.total_counts();
    let w = data.total_durations();
    Ok((0..theta.len())
        .map(|k| -m[k] + if w[k] == 0.0 { 0.0 } else { (-theta[k]).exp() * w[k] })
        .collect())
}

pub fn hess_diag_log_likelihood(data: &CoalescentData, theta: &[f64]) -> Result<Vec<f64>> {
    check_len(data, theta)?;
    let w = data.total_durations();
    Ok((0..theta.len())
        .map(|k| if w[k] == 0.0 { 0.0 } else { -(-theta[k]).exp() * w[k] })
        .collect())
}

/// `sum log C(n, 2)` over every coalescent event of every locus.
///
/// The same sum is the log of the binomial product in the density of
/// coalescent times, so the two cancel in the labeled-tree density.
pub fn log_tree_normalizer(data: &CoalescentData) -> f64 {
    data.ledgers()
        .iter()
        .flat_map(|l| l.intervals())
        .flat_map(|r| &r.events)
        .filter(|e| e.kind == EventKind::Coalescent)
        .map(|e| super::ledger::choose2(e.lineages_before).ln())
        .sum()
}

/// Log-density of the coalescent times: likelihood plus the binomial product.
pub fn log_time_density(data: &CoalescentData, theta: &[f64]) -> Result<f64> {
    Ok(log_likelihood(data, theta)? + log_tree_normalizer(data))
}
