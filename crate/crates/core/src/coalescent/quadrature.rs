//! Coalescent density under an arbitrary `Ne(t)` by numerical integration.
//!
//! Used as an oracle for the closed-form piecewise likelihood: it walks the
//! tree's own event list and never looks at a grid.

use super::ledger::choose2;
use crate::error::{Error, Result};
use crate::treeio::TimeTree;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 60;

fn kronrod15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let pair = f(c - x) + f(c + x);
        k += WGK[i] * pair;
        if i % 2 == 1 {
            g += WG[i / 2] * pair;
        }
    }
    (k * h, (k - g).abs() * h)
}

/// Adaptive Gauss-Kronrod (7/15) integral of `f` over `[a, b]`.
///
/// Pieces are bisected until their error estimate falls under their share of
/// `tol`; pieces narrower than `1e-14 * max(|a|, 1)` are accepted as-is, which
/// lets jump discontinuities resolve with negligible error.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let span = (b - a).abs();
    let mut total = 0.0;
    let mut stack = vec![(a, b, 0u32)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let (value, err) = kronrod15(f, lo, hi);
        if !value.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand on [{lo}, {hi}]")));
        }
        let width = (hi - lo).abs();
        if err <= tol * width / span || width < 1e-14 * lo.abs().max(1.0) {
            total += value;
        } else if depth >= MAX_DEPTH {
            return Err(Error::Quadrature(format!(
                "error estimate {err:e} on [{lo}, {hi}] after {MAX_DEPTH} bisections"
            )));
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    Ok(total)
}

/// Log joint density of the coalescent times of `tree` given sampling times,
/// for a population size function `ne(t) > 0`.
///
/// Each inter-event segment contributes `-C(n,2) * integral 1/ne`, and each
/// coalescence at `t` contributes `log C(n,2) - log ne(t)`.
///
/// `breaks` lists known discontinuities of `ne` in increasing order; segments are split there
/// before integrating. The Kronrod error estimate cannot see a jump that
/// falls between its nodes, so an unsplit step function can be misintegrated.
pub fn oracle_log_density(tree: &TimeTree, ne: &dyn Fn(f64) -> f64, breaks: &[f64]) -> Result<f64> {
    let mut events: Vec<(f64, bool, usize)> = tree
        .nodes()
        .iter()
        .enumerate()
        .map(|(id, n)| (n.height, !n.is_tip(), id))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let inv = |t: f64| 1.0 / ne(t);
    let mut lineages = 0usize;
    let mut now = 0.0;
    let mut log_density = 0.0;
    for (time, coalescent, _) in events {
        if lineages >= 2 && time > now {
            let mut lo = now;
            for &b in breaks.iter().filter(|&&b| b > now && b < time) {
                log_density -= choose2(lineages) * integrate(&inv, lo, b, 1e-13)?;
                lo = b;
            }
            log_density -= choose2(lineages) * integrate(&inv, lo, time, 1e-13)?;
        }
        now = time;
        if coalescent {
            let level = ne(time);
            if !(level > 0.0) {
                return Err(Error::InvalidParameter(format!("Ne({time}) = {level}")));
            }
            log_density += choose2(lineages).ln() - level.ln();
            lineages -= 1;
        } else {
            lineages += 1;
        }
    }
    Ok(log_density)
}
