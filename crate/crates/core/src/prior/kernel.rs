//! Additive squared-exponential kernel and its jittered Cholesky factor.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// How many times the diagonal jitter is multiplied by 10 before giving up.
pub const JITTER_RETRIES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    pub sigma2: Vec<f64>,
    pub lengthscale: Vec<f64>,
}

impl KernelParams {
    pub fn validate(&self, lengthscale_min: f64) -> Result<()> {
        if self.sigma2.len() != self.lengthscale.len() {
            return Err(Error::Dimension("sigma2 and lengthscale lengths differ".into()));
        }
        for (&s, &l) in self.sigma2.iter().zip(&self.lengthscale) {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("marginal scale {s}")));
            }
            if !(l > 0.0 && l.is_finite() && l >= lengthscale_min) {
                return Err(Error::InvalidParameter(format!("length-scale {l}")));
            }
        }
        Ok(())
    }
}

/// One covariate's contribution `sigma2 exp(-(z_i - z_j)^2 / (2 l^2))`.
pub fn kernel_component(z: &[f64], sigma2: f64, lengthscale: f64) -> Result<DMatrix<f64>> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariate value in kernel".into()));
    }
    let m = z.len();
    let scale = 0.5 / (lengthscale * lengthscale);
    Ok(DMatrix::from_fn(m, m, |i, j| {
        let d = z[i] - z[j];
        sigma2 * (-d * d * scale).exp()
    }))
}

/// `K = sum_p K_p` over covariate rows `z[p]`, without jitter.
pub fn kernel_matrix(z: &[Vec<f64>], params: &KernelParams) -> Result<DMatrix<f64>> {
    if z.len() != params.sigma2.len() {
        return Err(Error::Dimension(format!(
            "{} covariate rows but {} kernel parameter sets",
            z.len(),
            params.sigma2.len()
        )));
    }
    let m = z.first().map_or(0, Vec::len);
    let mut k = DMatrix::zeros(m, m);
    for (p, row) in z.iter().enumerate() {
        k += kernel_component(row, params.sigma2[p], params.lengthscale[p])?;
    }
    Ok(k)
}

/// Cholesky factor of `K + eps I`.
#[derive(Debug, Clone)]
pub struct GpFactor {
    chol: Cholesky<f64, Dyn>,
    lower: DMatrix<f64>,
    jitter: f64,
    log_det: f64,
}

impl GpFactor {
    /// Factor `k + jitter I`, multiplying `jitter` by 10 on failure up to
    /// [`JITTER_RETRIES`] times.
    pub fn new(k: &DMatrix<f64>, jitter: f64) -> Result<Self> {
        let mut eps = jitter;
        for _ in 0..=JITTER_RETRIES {
            let mut a = k.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += eps;
            }
            if let Some(chol) = Cholesky::new(a) {
                let lower = chol.l();
                let log_det = 2.0 * lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
                if log_det.is_finite() {
                    return Ok(Self {
                        chol,
                        lower,
                        jitter: eps,
                        log_det,
                    });
                }
            }
            eps *= 10.0;
        }
        Err(Error::Factorization(format!(
            "kernel matrix ({}x{}) not positive definite even with jitter {:e}",
            k.nrows(),
            k.ncols(),
            eps / 10.0
        )))
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.chol.solve(&DVector::from_column_slice(b)).as_slice().to_vec()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `L u`.
    pub fn mul_lower(&self, u: &[f64]) -> Vec<f64> {
        (&self.lower * DVector::from_column_slice(u)).as_slice().to_vec()
    }

    /// `L' v`.
    pub fn mul_lower_transpose(&self, v: &[f64]) -> Vec<f64> {
        self.lower.tr_mul(&DVector::from_column_slice(v)).as_slice().to_vec()
    }

    /// `L^{-1} g`.
    pub fn solve_lower(&self, g: &[f64]) -> Vec<f64> {
        self.lower
            .solve_lower_triangular(&DVector::from_column_slice(g))
            .expect("factor has a positive diagonal")
            .as_slice()
            .to_vec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpDensity {
    pub log_density: f64,
    /// `K^{-1} g`, reused by gradients.
    pub alpha: Vec<f64>,
}

/// `-(g'K^{-1}g + log det K + M log 2 pi) / 2`.
pub fn gp_log_density(g: &[f64], factor: &GpFactor) -> Result<GpDensity> {
    if g.len() != factor.dim() {
        return Err(Error::Dimension(format!("g has length {}, K is {}", g.len(), factor.dim())));
    }
    let alpha = factor.solve(g);
    let quad: f64 = g.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let m = g.len() as f64;
    Ok(GpDensity {
        log_density: -0.5 * (quad + factor.log_det() + m * (2.0 * std::f64::consts::PI).ln()),
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN_2PI: f64 = 1.837_877_066_409_345_5;

    fn params(s: f64, l: f64) -> KernelParams {
        KernelParams {
            sigma2: vec![s],
            lengthscale: vec![l],
        }
    }

    #[test]
    fn unit_distance_value() {
        let k = kernel_matrix(&[vec![0.0, 1.0]], &params(1.0, 1.0)).unwrap();
        assert_eq!(k[(0, 0)], 1.0);
        assert!((k[(0, 1)] - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(k[(0, 1)], k[(1, 0)]);
    }

    #[test]
    fn additive_diagonal() {
        let z = vec![vec![0.0, 1.0, 2.0], vec![5.0, -1.0, 0.3]];
        let p = KernelParams {
            sigma2: vec![0.7, 1.9],
            lengthscale: vec![1.0, 0.4],
        };
        let k = kernel_matrix(&z, &p).unwrap();
        for i in 0..3 {
            assert!((k[(i, i)] - 2.6).abs() < 1e-15);
        }
    }

    #[test]
    fn long_lengthscale_is_constant() {
        let z = vec![(0..11).map(|i| i as f64).collect::<Vec<_>>()];
        // Worst deviation is 1 - exp(-100 / 2e12) = 5e-11.
        let k = kernel_matrix(&z, &params(1.0, 1e6)).unwrap();
        assert!(k.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn identity_densities() {
        let f = GpFactor::new(&DMatrix::identity(4, 4), 0.0).unwrap();
        let d = gp_log_density(&[0.0; 4], &f).unwrap();
        assert!((d.log_density + 2.0 * LN_2PI).abs() < 1e-14);
        let d = gp_log_density(&[1.0, 0.0, 0.0, 0.0], &f).unwrap();
        assert!((d.log_density + 0.5 + 2.0 * LN_2PI).abs() < 1e-14);
    }

    #[test]
    fn two_by_two_by_hand() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let f = GpFactor::new(&k, 0.0).unwrap();
        let d = gp_log_density(&[1.0, 1.0], &f).unwrap();
        let expect = -0.5 * (4.0 / 3.0 + 0.75f64.ln()) - LN_2PI;
        assert!((d.log_density - expect).abs() < 1e-14);
    }

    #[test]
    fn jitter_escalates_on_duplicates() {
        // Exactly singular: two identical covariate values.
        let k = kernel_matrix(&[vec![0.0, 0.0, 1.0]], &params(1.0, 1.0)).unwrap();
        let f = GpFactor::new(&k, 1e-8).unwrap();
        assert!(f.jitter() >= 1e-8);
        assert!(f.log_det().is_finite());
    }

    #[test]
    fn whitening_round_trip() {
        let k = kernel_matrix(&[vec![0.1, 0.5, -0.7, 2.0]], &params(1.3, 0.8)).unwrap();
        let f = GpFactor::new(&k, 1e-8).unwrap();
        let g = [0.3, -1.0, 0.2, 0.9];
        let back = f.mul_lower(&f.solve_lower(&g));
        for (a, b) in back.iter().zip(&g) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
