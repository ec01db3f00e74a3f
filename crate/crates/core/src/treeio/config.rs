//! Run configuration: line-oriented `key = value` text.
//!
//! `#` starts a comment. Relative paths resolve against the config file's
//! directory. Unknown keys are errors.

use std::path::{Path, PathBuf};

use super::tree::DateDirection;
use crate::error::{Error, Result};

/// Which mass matrix the HMC move uses for the log-size block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioning {
    Identity,
    HessianDiagonal,
    HessianTridiagonal,
}

impl Preconditioning {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Self::Identity),
            "diagonal" | "hessian-diagonal" => Some(Self::HessianDiagonal),
            "tridiagonal" | "hessian-tridiagonal" => Some(Self::HessianTridiagonal),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::HessianDiagonal => "diagonal",
            Self::HessianTridiagonal => "tridiagonal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// `intervals` intervals with equally spaced points up to `cutoff`.
    Uniform { cutoff: f64, intervals: usize },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSettings {
    pub tau_shape: f64,
    pub tau_scale: f64,
    pub sigma2_rate: f64,
    pub lengthscale_rate: f64,
    pub lengthscale_min: f64,
    pub jitter: f64,
    /// Random-walk precision for imputed covariates (standardized scale).
    pub missing_precision: f64,
    /// Precision of an optional N(0, 1/κ) anchor on the first GMRF error; 0 keeps the field intrinsic.
    pub level_precision: f64,
    pub whiten: bool,
}

impl Default for PriorSettings {
    fn default() -> Self {
        Self {
            tau_shape: 1.0,
            tau_scale: 10.0,
            sigma2_rate: 1.0,
            lengthscale_rate: 1.0,
            lengthscale_min: 0.0,
            jitter: 1e-8,
            missing_precision: 1.0,
            level_precision: 0.0,
            whiten: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmcSettings {
    pub leapfrog_steps: usize,
    /// Uniform relative jitter on the trajectory length.
    pub steps_jitter: f64,
    pub step_size: f64,
    pub target_accept: f64,
    pub preconditioning: Preconditioning,
    /// Mass-matrix refresh cadence during warmup.
    pub mass_refresh: usize,
}

impl Default for HmcSettings {
    fn default() -> Self {
        Self {
            leapfrog_steps: 32,
            steps_jitter: 0.2,
            step_size: 0.05,
            target_accept: 0.8,
            preconditioning: Preconditioning::HessianTridiagonal,
            mass_refresh: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSettings {
    pub warmup: usize,
    pub iterations: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
    pub checkpoint_every: usize,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            warmup: 1000,
            iterations: 5000,
            thin: 1,
            seed: 1,
            chains: 1,
            checkpoint_every: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub trees: Vec<PathBuf>,
    pub tip_dates: Vec<PathBuf>,
    pub date_direction: Option<DateDirection>,
    pub covariates: Option<PathBuf>,
    pub standardize: bool,
    pub grid: GridSpec,
    pub prior: PriorSettings,
    pub hmc: HmcSettings,
    pub chain: ChainSettings,
    pub burn_in: f64,
    pub threshold: f64,
    pub out_dir: PathBuf,
}

/// Split `key = value` lines, skipping blanks and comments. Line numbers are 1-based.
pub fn key_values(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
            line: i + 1,
            msg: format!("expected 'key = value', found '{line}'"),
        })?;
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::Config {
                line: i + 1,
                msg: "empty key".into(),
            });
        }
        out.push((i + 1, key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub(crate) fn parse_value<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config {
        line,
        msg: format!("invalid value '{v}' for '{key}'"),
    })
}

pub(crate) fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config {
            line,
            msg: format!("invalid boolean '{v}' for '{key}'"),
        }),
    }
}

pub(crate) fn parse_list<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(line, key, s))
        .collect()
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| e.in_file(path))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let resolve = |s: &str| {
            let p = PathBuf::from(s);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let mut trees = Vec::new();
        let mut tip_dates = Vec::new();
        let mut date_direction = None;
        let mut covariates = None;
        let mut standardize = true;
        let mut cutoff = None;
        let mut intervals = None;
        let mut grid_points = None;
        let mut prior = PriorSettings::default();
        let mut hmc = HmcSettings::default();
        let mut chain = ChainSettings::default();
        let mut burn_in = 0.1;
        let mut threshold = 0.05;
        let mut out_dir = base.join("out");

        for (line, key, v) in key_values(text)? {
            let v = v.as_str();
            match key.as_str() {
                "tree" | "trees" => trees.extend(v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(resolve)),
                "tip_dates" => {
                    tip_dates.extend(v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(resolve))
                }
                "date_direction" => {
                    date_direction = Some(match v {
                        "forward" | "forward-calendar" => DateDirection::Forward,
                        "backward" | "backward-age" => DateDirection::Backward,
                        _ => {
                            return Err(Error::Config {
                                line,
                                msg: format!("date_direction must be 'forward' or 'backward', got '{v}'"),
                            })
                        }
                    })
                }
                "covariates" => covariates = Some(resolve(v)),
                "standardize" => standardize = parse_bool(line, &key, v)?,
                "cutoff" => cutoff = Some((line, parse_value::<f64>(line, &key, v)?)),
                "intervals" => intervals = Some((line, parse_value::<usize>(line, &key, v)?)),
                "grid_points" => grid_points = Some((line, parse_list::<f64>(line, &key, v)?)),
                "tau_shape" => prior.tau_shape = parse_value(line, &key, v)?,
                "tau_scale" => prior.tau_scale = parse_value(line, &key, v)?,
                "sigma2_rate" => prior.sigma2_rate = parse_value(line, &key, v)?,
                "lengthscale_rate" => prior.lengthscale_rate = parse_value(line, &key, v)?,
                "lengthscale_min" => prior.lengthscale_min = parse_value(line, &key, v)?,
                "jitter" => prior.jitter = parse_value(line, &key, v)?,
                "missing_precision" => prior.missing_precision = parse_value(line, &key, v)?,
                "level_precision" => prior.level_precision = parse_value(line, &key, v)?,
                "whiten" => prior.whiten = parse_bool(line, &key, v)?,
                "leapfrog_steps" => hmc.leapfrog_steps = parse_value(line, &key, v)?,
                "steps_jitter" => hmc.steps_jitter = parse_value(line, &key, v)?,
                "step_size" => hmc.step_size = parse_value(line, &key, v)?,
                "target_accept" => hmc.target_accept = parse_value(line, &key, v)?,
                "preconditioning" => {
                    hmc.preconditioning = Preconditioning::parse(v).ok_or_else(|| Error::Config {
                        line,
                        msg: format!("preconditioning must be identity, diagonal or tridiagonal, got '{v}'"),
                    })?
                }
                "mass_refresh" => hmc.mass_refresh = parse_value(line, &key, v)?,
                "warmup" => chain.warmup = parse_value(line, &key, v)?,
                "iterations" => chain.iterations = parse_value(line, &key, v)?,
                "thin" => chain.thin = parse_value(line, &key, v)?,
                "seed" => chain.seed = parse_value(line, &key, v)?,
                "chains" => chain.chains = parse_value(line, &key, v)?,
                "checkpoint_every" => chain.checkpoint_every = parse_value(line, &key, v)?,
                "burn_in" => burn_in = parse_value(line, &key, v)?,
                "threshold" => threshold = parse_value(line, &key, v)?,
                "out_dir" => out_dir = resolve(v),
                _ => {
                    return Err(Error::Config {
                        line,
                        msg: format!("unknown key '{key}'"),
                    })
                }
            }
        }

        let bad = |line: usize, msg: &str| Error::Config {
            line,
            msg: msg.to_string(),
        };
        if trees.is_empty() {
            return Err(bad(0, "at least one 'tree' is required"));
        }
        if !tip_dates.is_empty() {
            if tip_dates.len() != 1 && tip_dates.len() != trees.len() {
                return Err(bad(0, "give one tip_dates file, or one per tree"));
            }
            if date_direction.is_none() {
                return Err(bad(0, "tip_dates requires an explicit date_direction"));
            }
        }
        let grid = match (grid_points, cutoff, intervals) {
            (Some((line, pts)), None, None) => {
                if pts.is_empty() {
                    return Err(bad(line, "grid_points needs at least one point"));
                }
                if pts[0] <= 0.0 || pts.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(bad(line, "grid points must be positive and strictly increasing"));
                }
                GridSpec::Explicit(pts)
            }
            (None, Some((cl, c)), Some((il, m))) => {
                if !(c > 0.0) || !c.is_finite() {
                    return Err(bad(cl, "cutoff must be positive"));
                }
                if m < 2 {
                    return Err(bad(il, "intervals must be at least 2"));
                }
                GridSpec::Uniform { cutoff: c, intervals: m }
            }
            (Some((line, _)), _, _) => return Err(bad(line, "grid_points excludes cutoff/intervals")),
            _ => return Err(bad(0, "give either 'cutoff' and 'intervals', or 'grid_points'")),
        };
        if chain.iterations == 0 {
            return Err(bad(0, "iterations must be positive"));
        }
        if chain.thin == 0 || chain.chains == 0 {
            return Err(bad(0, "thin and chains must be positive"));
        }
        if !(hmc.step_size > 0.0) {
            return Err(bad(0, "step_size must be positive"));
        }
        if hmc.leapfrog_steps == 0 {
            return Err(bad(0, "leapfrog_steps must be positive"));
        }
        if !(0.0..1.0).contains(&hmc.steps_jitter) {
            return Err(bad(0, "steps_jitter must lie in [0, 1)"));
        }
        if !(hmc.target_accept > 0.0 && hmc.target_accept < 1.0) {
            return Err(bad(0, "target_accept must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&burn_in) {
            return Err(bad(0, "burn_in must lie in [0, 1)"));
        }
        let positive = [
            ("tau_shape", prior.tau_shape),
            ("tau_scale", prior.tau_scale),
            ("sigma2_rate", prior.sigma2_rate),
            ("lengthscale_rate", prior.lengthscale_rate),
            ("jitter", prior.jitter),
            ("missing_precision", prior.missing_precision),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(bad(0, &format!("{name} must be positive")));
            }
        }
        if !(prior.lengthscale_min >= 0.0) || !(prior.level_precision >= 0.0) {
            return Err(bad(0, "lengthscale_min and level_precision must be non-negative"));
        }
        Ok(Self {
            trees,
            tip_dates,
            date_direction,
            covariates,
            standardize,
            grid,
            prior,
            hmc,
            chain,
            burn_in,
            threshold,
            out_dir,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "tree = t.nwk\ncutoff = 3\nintervals = 4\n";

    #[test]
    fn defaults_and_paths() {
        let c = RunConfig::parse(MINIMAL, Path::new("/data")).unwrap();
        assert_eq!(c.trees, vec![PathBuf::from("/data/t.nwk")]);
        assert_eq!(c.grid, GridSpec::Uniform { cutoff: 3.0, intervals: 4 });
        assert_eq!(c.prior.tau_shape, 1.0);
        assert_eq!(c.prior.tau_scale, 10.0);
        assert_eq!(c.hmc.target_accept, 0.8);
        assert_eq!(c.hmc.leapfrog_steps, 32);
        assert!(c.standardize);
    }

    #[test]
    fn unknown_key_names_line() {
        let e = RunConfig::parse(&format!("{MINIMAL}# c\nbogus = 1\n"), Path::new(".")).unwrap_err();
        match e {
            Error::Config { line, msg } => {
                assert_eq!(line, 5);
                assert!(msg.contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invariants_enforced() {
        let base = Path::new(".");
        assert!(RunConfig::parse("tree = t\ncutoff = 1\nintervals = 1\n", base).is_err());
        assert!(RunConfig::parse(&format!("{MINIMAL}iterations = 0\n"), base).is_err());
        assert!(RunConfig::parse(&format!("{MINIMAL}step_size = 0\n"), base).is_err());
        assert!(RunConfig::parse("tree = t\ngrid_points = 1, 0.5\n", base).is_err());
        assert!(RunConfig::parse(&format!("{MINIMAL}tip_dates = d.csv\n"), base).is_err());
    }

    #[test]
    fn explicit_grid_passthrough() {
        let c = RunConfig::parse("tree = t\ngrid_points = 0.5, 0.9, 2.0\n", Path::new(".")).unwrap();
        assert_eq!(c.grid, GridSpec::Explicit(vec![0.5, 0.9, 2.0]));
    }
}
