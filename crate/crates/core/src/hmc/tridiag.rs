//! Symmetric tridiagonal matrices: products, Thomas solves and band Cholesky.

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix stored as its diagonal and first off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if off.len() + 1 != diag.len().max(1) {
            return Err(Error::Dimension(format!(
                "tridiagonal with {} diagonal and {} off-diagonal entries",
                diag.len(),
                off.len()
            )));
        }
        Ok(Self { diag, off })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            diag: vec![1.0; m],
            off: vec![0.0; m.saturating_sub(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let m = self.dim();
        let mut out: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for k in 0..m.saturating_sub(1) {
            out[k] += self.off[k] * x[k + 1];
            out[k + 1] += self.off[k] * x[k];
        }
        out
    }
}

/// Thomas algorithm (no pivoting) for `A x = rhs`.
pub fn tridiag_solve(a: &SymTridiag, rhs: &[f64]) -> Result<Vec<f64>> {
    let m = a.dim();
    if rhs.len() != m {
        return Err(Error::Dimension(format!("rhs length {} for a {m}x{m} system", rhs.len())));
    }
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut prev_c = 0.0;
    let mut prev_d = 0.0;
    for k in 0..m {
        let sub = if k > 0 { a.off[k - 1] } else { 0.0 };
        let pivot = a.diag[k] - sub * prev_c;
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::Factorization(format!("zero pivot at row {k}")));
        }
        c[k] = if k + 1 < m { a.off[k] / pivot } else { 0.0 };
        d[k] = (rhs[k] - sub * prev_d) / pivot;
        prev_c = c[k];
        prev_d = d[k];
    }
    let mut x = d;
    for k in (0..m.saturating_sub(1)).rev() {
        x[k] -= c[k] * x[k + 1];
    }
    Ok(x)
}

/// `A = L L'` with `L` lower bidiagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagCholesky {
    diag: Vec<f64>,
    sub: Vec<f64>,
}

impl TridiagCholesky {
    /// Factor `a`; squared pivots below `floor` are raised to `floor`, which
    /// factors `a` plus a tiny diagonal correction when `a` is only
    /// semi-definite. With `floor = 0` a non-positive pivot is an error.
    pub fn new(a: &SymTridiag, floor: f64) -> Result<Self> {
        let m = a.dim();
        let mut diag = vec![0.0; m];
        let mut sub = vec![0.0; m.saturating_sub(1)];
        for k in 0..m {
            let mut pivot = a.diag[k];
            if k > 0 {
                sub[k - 1] = a.off[k - 1] / diag[k - 1];
                pivot -= sub[k - 1] * sub[k - 1];
            }
            if pivot < floor {
                pivot = floor;
            }
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(Error::Factorization(format!("non-positive pivot at row {k}")));
            }
            diag[k] = pivot.sqrt();
        }
        Ok(Self { diag, sub })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `L z`.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|k| self.diag[k] * z[k] + if k > 0 { self.sub[k - 1] * z[k - 1] } else { 0.0 })
            .collect()
    }

    /// `(L L')^{-1} b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = self.dim();
        let mut y = vec![0.0; m];
        for k in 0..m {
            let carry = if k > 0 { self.sub[k - 1] * y[k - 1] } else { 0.0 };
            y[k] = (b[k] - carry) / self.diag[k];
        }
        for k in (0..m).rev() {
            let carry = if k + 1 < m { self.sub[k] * y[k + 1] } else { 0.0 };
            y[k] = (y[k] - carry) / self.diag[k];
        }
        y
    }

    /// `log det(L L')`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.diag.iter().map(|d| d.ln()).sum::<f64>()
    }
}
