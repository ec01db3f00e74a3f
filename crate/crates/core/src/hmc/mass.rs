//! Mass matrices for the augmented position `[theta | rest]`.
//!
//! Only the leading `theta` block is preconditioned; the trailing block
//! (GP values or whitened coordinates, imputed covariates) uses identity mass.

use rand::Rng;
use rand_distr::StandardNormal;

use super::tridiag::{SymTridiag, TridiagCholesky};
use crate::error::Result;
use crate::prior::structure_bands;
use crate::treeio::Preconditioning;

/// Lower bound on diagonal entries and on band-Cholesky pivots.
pub const MASS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum LeadBlock {
    Identity(usize),
    Diagonal(Vec<f64>),
    Tridiagonal { bands: SymTridiag, chol: TridiagCholesky },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassMatrix {
    lead: LeadBlock,
    tail: usize,
}

impl MassMatrix {
    pub fn identity(dim: usize) -> Self {
        Self {
            lead: LeadBlock::Identity(dim),
            tail: 0,
        }
    }

    pub fn diagonal(diag: Vec<f64>, tail: usize) -> Self {
        let diag = diag.into_iter().map(|d| d.max(MASS_FLOOR)).collect();
        Self {
            lead: LeadBlock::Diagonal(diag),
            tail,
        }
    }

    pub fn tridiagonal(mut bands: SymTridiag, tail: usize) -> Result<Self> {
        for d in &mut bands.diag {
            *d = d.max(MASS_FLOOR);
        }
        let chol = TridiagCholesky::new(&bands, MASS_FLOOR)?;
        Ok(Self {
            lead: LeadBlock::Tridiagonal { bands, chol },
            tail,
        })
    }

    /// Rebuild from stored bands (checkpoint resume).
    pub fn from_parts(mode: Preconditioning, diag: Vec<f64>, off: Vec<f64>, tail: usize) -> Result<Self> {
        Ok(match mode {
            Preconditioning::Identity => Self {
                lead: LeadBlock::Identity(diag.len()),
                tail,
            },
            Preconditioning::HessianDiagonal => Self::diagonal(diag, tail),
            Preconditioning::HessianTridiagonal => Self::tridiagonal(SymTridiag::new(diag, off)?, tail)?,
        })
    }

    pub fn mode(&self) -> Preconditioning {
        match self.lead {
            LeadBlock::Identity(_) => Preconditioning::Identity,
            LeadBlock::Diagonal(_) => Preconditioning::HessianDiagonal,
            LeadBlock::Tridiagonal { .. } => Preconditioning::HessianTridiagonal,
        }
    }

    pub fn lead(&self) -> &LeadBlock {
        &self.lead
    }

    pub fn lead_dim(&self) -> usize {
        match &self.lead {
            LeadBlock::Identity(m) => *m,
            LeadBlock::Diagonal(d) => d.len(),
            LeadBlock::Tridiagonal { bands, .. } => bands.dim(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lead_dim() + self.tail
    }

    /// Diagonal and off-diagonal of the lead block (identity gives ones and zeros).
    pub fn lead_bands(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.lead {
            LeadBlock::Identity(m) => (vec![1.0; *m], vec![0.0; m.saturating_sub(1)]),
            LeadBlock::Diagonal(d) => (d.clone(), vec![0.0; d.len().saturating_sub(1)]),
            LeadBlock::Tridiagonal { bands, .. } => (bands.diag.clone(), bands.off.clone()),
        }
    }

    /// Draw `p ~ N(0, M)`.
    pub fn sample_momentum<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let m = self.lead_dim();
        let mut p = match &self.lead {
            LeadBlock::Identity(_) => z[..m].to_vec(),
            LeadBlock::Diagonal(d) => z[..m].iter().zip(d).map(|(z, d)| z * d.sqrt()).collect(),
            LeadBlock::Tridiagonal { chol, .. } => chol.mul_lower(&z[..m]),
        };
        p.extend_from_slice(&z[m..]);
        p
    }

    /// `M^{-1} p`.
    pub fn inv_mul(&self, p: &[f64]) -> Vec<f64> {
        let m = self.lead_dim();
        let mut v = match &self.lead {
            LeadBlock::Identity(_) => p[..m].to_vec(),
            LeadBlock::Diagonal(d) => p[..m].iter().zip(d).map(|(p, d)| p / d).collect(),
            LeadBlock::Tridiagonal { chol, .. } => chol.solve(&p[..m]),
        };
        v.extend_from_slice(&p[m..]);
        v
    }

    /// `p' M^{-1} p / 2`.
    pub fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(self.inv_mul(p)).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Negative Hessian of likelihood + GMRF in `theta`: `tau Q + diag(e^{-theta} w)`
/// (plus the level anchor on the first entry), reduced to the requested mode.
pub fn build_mass_matrix(
    theta: &[f64],
    durations: &[f64],
    tau: f64,
    level_precision: f64,
    mode: Preconditioning,
    tail: usize,
) -> Result<MassMatrix> {
    let m = theta.len();
    let (qd, qo) = structure_bands(m);
    let mut diag: Vec<f64> = (0..m)
        .map(|k| {
            let lik = if durations[k] == 0.0 { 0.0 } else { (-theta[k]).exp() * durations[k] };
            tau * qd[k] + lik
        })
        .collect();
    if m > 0 {
        diag[0] += level_precision;
    }
    let off: Vec<f64> = qo.iter().map(|o| tau * o).collect();
    match mode {
        Preconditioning::Identity => Ok(MassMatrix {
            lead: LeadBlock::Identity(m),
            tail,
        }),
        Preconditioning::HessianDiagonal => Ok(MassMatrix::diagonal(diag, tail)),
        Preconditioning::HessianTridiagonal => MassMatrix::tridiagonal(SymTridiag::new(diag, off)?, tail),
    }
}
