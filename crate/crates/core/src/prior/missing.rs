//! Random-walk prior for covariate values missing before the first observation.

use crate::error::{Error, Result};
use crate::treeio::CovariateTable;

/// The missing tail of one covariate row: intervals `start..M`, anchored at
/// the observed value in interval `start - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingBlock {
    pub covariate: usize,
    pub start: usize,
    pub len: usize,
    pub anchor: f64,
}

impl MissingBlock {
    pub fn intervals(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Locate every row's missing block, requiring it to be the oldest contiguous run.
pub fn missing_blocks(table: &CovariateTable) -> Result<Vec<MissingBlock>> {
    let mut blocks = Vec::new();
    for p in 0..table.count() {
        let mask = &table.missing()[p];
        let Some(first) = mask.iter().position(|&m| m) else {
            continue;
        };
        if mask[first..].iter().any(|&m| !m) {
            return Err(Error::Covariates(format!(
                "covariate '{}' has missing values between observations; only a missing \
                 block older than every observation can be imputed — impute it externally",
                table.names()[p]
            )));
        }
        blocks.push(MissingBlock {
            covariate: p,
            start: first,
            len: mask.len() - first,
            anchor: table.row(p)[first - 1],
        });
    }
    Ok(blocks)
}

/// Log-density and gradient of the chain `(anchor, z_1, ..., z_J)` under a
/// random walk with precision `tau_z`, anchor fixed.
pub fn missing_covariate_prior(values: &[f64], anchor: f64, tau_z: f64) -> Result<(f64, Vec<f64>)> {
    if !(tau_z > 0.0) {
        return Err(Error::InvalidParameter(format!("missing-covariate precision {tau_z}")));
    }
    let j = values.len();
    let mut prev = anchor;
    let mut ss = 0.0;
    let mut grad = vec![0.0; j];
    for i in 0..j {
        let d = values[i] - prev;
        ss += d * d;
        grad[i] -= tau_z * d;
        if i > 0 {
            grad[i - 1] += tau_z * d;
        }
        prev = values[i];
    }
    Ok((-0.5 * tau_z * ss + 0.5 * j as f64 * tau_z.ln(), grad))
}
