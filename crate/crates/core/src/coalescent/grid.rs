use crate::error::{Error, Result};

/// Interior grid points `g_1 < ... < g_{M-1}` with implicit `g_0 = 0`.
///
/// Interval `k` (0-based) covers `(g_k, g_{k+1}]`; the first interval also
/// holds time 0 and the last one extends to the root of each tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Grid("need at least one grid point (two intervals)".into()));
        }
        if !points.iter().all(|g| g.is_finite()) || points[0] <= 0.0 {
            return Err(Error::Grid("grid points must be finite and positive".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Grid("grid points must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Number of intervals `M`.
    pub fn intervals(&self) -> usize {
        self.points.len() + 1
    }

    /// 0-based interval containing height `t`; points belong to the interval on their left.
    pub fn interval_of(&self, t: f64) -> usize {
        self.points.partition_point(|&g| g < t)
    }

    /// Left and right ends of interval `k`; the last right end is infinite.
    pub fn bounds(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { 0.0 } else { self.points[k - 1] };
        let hi = self.points.get(k).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }
}

/// `intervals - 1` equally spaced points ending at `cutoff`.
pub fn build_grid(cutoff: f64, intervals: usize) -> Result<Grid> {
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(Error::Grid(format!("cutoff must be positive, got {cutoff}")));
    }
    if intervals < 2 {
        return Err(Error::Grid(format!("need at least 2 intervals, got {intervals}")));
    }
    let n = intervals - 1;
    Grid::from_points((1..=n).map(|k| k as f64 * cutoff / n as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_points() {
        assert_eq!(build_grid(3.0, 4).unwrap().points(), &[1.0, 2.0, 3.0]);
        assert_eq!(build_grid(1.0, 2).unwrap().points(), &[1.0]);
        assert!(build_grid(1.0, 1).is_err());
        assert!(build_grid(0.0, 3).is_err());
    }

    #[test]
    fn explicit_points_verbatim() {
        let g = Grid::from_points(vec![0.5, 0.9, 2.0]).unwrap();
        assert_eq!(g.points(), &[0.5, 0.9, 2.0]);
        assert_eq!(g.intervals(), 4);
        assert!(Grid::from_points(vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn half_open_membership() {
        let g = Grid::from_points(vec![1.0, 2.0]).unwrap();
        assert_eq!(g.interval_of(0.0), 0);
        assert_eq!(g.interval_of(1.0), 0);
        assert_eq!(g.interval_of(1.0 + 1e-12), 1);
        assert_eq!(g.interval_of(2.0), 1);
        assert_eq!(g.interval_of(50.0), 2);
    }
}
