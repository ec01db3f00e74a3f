//! Flat stretches of a response curve: where the finite-difference slope
//! stays below a threshold in magnitude.

use crate::error::{Error, Result};

/// A maximal run of grid points with `|slope| < threshold`. Ends that fall
/// between grid points are located by linear interpolation of `|slope|`;
/// runs touching the end of the grid stop at the extreme covariate value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatRegion {
    pub start: f64,
    pub end: f64,
    /// Whether each end is a threshold crossing rather than the grid edge.
    pub start_is_crossing: bool,
    pub end_is_crossing: bool,
}

/// Second-order finite differences on a possibly uneven grid, one-sided at the ends.
pub fn slope(z: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    let n = z.len();
    if n != f.len() {
        return Err(Error::Dimension(format!("{n} covariate values for {} curve values", f.len())));
    }
    if n < 3 {
        return Err(Error::Summary("a curve needs at least 3 points".into()));
    }
    if z.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Summary("covariate values must be strictly increasing".into()));
    }
    let mut d = vec![0.0; n];
    d[0] = (f[1] - f[0]) / (z[1] - z[0]);
    d[n - 1] = (f[n - 1] - f[n - 2]) / (z[n - 1] - z[n - 2]);
    for i in 1..n - 1 {
        let hl = z[i] - z[i - 1];
        let hr = z[i + 1] - z[i];
        d[i] = (hl * hl * f[i + 1] - hr * hr * f[i - 1] + (hr * hr - hl * hl) * f[i]) / (hl * hr * (hl + hr));
    }
    Ok(d)
}

fn crossing(z0: f64, a0: f64, z1: f64, a1: f64, threshold: f64) -> f64 {
    if a0 == a1 {
        return 0.5 * (z0 + z1);
    }
    z0 + (a0 - threshold) / (a0 - a1) * (z1 - z0)
}

pub fn flat_regions(z: &[f64], f: &[f64], threshold: f64) -> Result<Vec<FlatRegion>> {
    if !(threshold > 0.0) {
        return Err(Error::Summary(format!("threshold must be positive, got {threshold}")));
    }
    let a: Vec<f64> = slope(z, f)?.into_iter().map(f64::abs).collect();
    let n = z.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if a[i] >= threshold {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < n && a[j + 1] < threshold {
            j += 1;
        }
        out.push(FlatRegion {
            start: if i == 0 { z[0] } else { crossing(z[i - 1], a[i - 1], z[i], a[i], threshold) },
            end: if j == n - 1 { z[n - 1] } else { crossing(z[j], a[j], z[j + 1], a[j + 1], threshold) },
            start_is_crossing: i > 0,
            end_is_crossing: j < n - 1,
        });
        i = j + 1;
    }
    Ok(out)
}

/// Covariate values where `|slope|` crosses the threshold.
pub fn flattening_points(z: &[f64], f: &[f64], threshold: f64) -> Result<Vec<f64>> {
    let mut pts = Vec::new();
    for r in flat_regions(z, f, threshold)? {
        if r.start_is_crossing {
            pts.push(r.start);
        }
        if r.end_is_crossing {
            pts.push(r.end);
        }
    }
    Ok(pts)
}
