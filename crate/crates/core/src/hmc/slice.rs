//! Univariate slice sampling with stepping-out and shrinkage.

use rand::Rng;

pub const MAX_SHRINKS: usize = 100;
const MAX_STEPS_OUT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceOutcome {
    pub value: f64,
    pub log_density: f64,
    /// Shrinkage ran out and the current value was kept.
    pub exhausted: bool,
}

/// One slice-sampling update of `x0` under `log_f` with initial bracket width `w`.
///
/// `log_fx0` is `log_f(x0)`, passed in to avoid a re-evaluation.
pub fn slice_sample<R, F>(x0: f64, log_fx0: f64, w: f64, rng: &mut R, mut log_f: F) -> SliceOutcome
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    let level = log_fx0 + rng.random::<f64>().ln();
    let mut lo = x0 - w * rng.random::<f64>();
    let mut hi = lo + w;
    let j = rng.random_range(0..MAX_STEPS_OUT);
    let k = MAX_STEPS_OUT - 1 - j;
    for _ in 0..j {
        if !(log_f(lo) > level) {
            break;
        }
        lo -= w;
    }
    for _ in 0..k {
        if !(log_f(hi) > level) {
            break;
        }
        hi += w;
    }
    for _ in 0..MAX_SHRINKS {
        let x = lo + (hi - lo) * rng.random::<f64>();
        let fx = log_f(x);
        if fx > level {
            return SliceOutcome {
                value: x,
                log_density: fx,
                exhausted: false,
            };
        }
        if x < x0 {
            lo = x;
        } else {
            hi = x;
        }
    }
    log::warn!("slice sampler exhausted {MAX_SHRINKS} shrinks at {x0}; keeping current value");
    SliceOutcome {
        value: x0,
        log_density: log_fx0,
        exhausted: true,
    }
}
