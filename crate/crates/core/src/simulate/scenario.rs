//! Synthetic scenarios: `log Ne` on each grid interval is a known function of
//! a covariate series, and one genealogy is simulated from it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{simulate_tree, PiecewiseNe, Schedule, SimSpec};
use crate::coalescent::{build_grid, Grid};
use crate::error::{Error, Result};
use crate::hmc::trace::fmt_f64;
use crate::treeio::config::{key_values, parse_list, parse_value};
use crate::treeio::{serialize_newick, CovariateTable, TimeTree};

/// How the true `theta_k` depends on the covariate `z_k`.
#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    /// `a + b z`.
    Linear { a: f64, b: f64 },
    /// `a + b z + c z^2` with `c < 0`.
    Concave { a: f64, b: f64, c: f64 },
    /// Explicit `theta` per interval; the covariate is carried along unused.
    Table(Vec<f64>),
}

impl Response {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear { .. } => "linear",
            Self::Concave { .. } => "concave",
            Self::Table(_) => "table",
        }
    }

    pub fn truth(&self, z: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Linear { a, b } => Ok(z.iter().map(|z| a + b * z).collect()),
            Self::Concave { a, b, c } => {
                if !(*c < 0.0) {
                    return Err(Error::Simulation(format!("concave response needs c < 0, got {c}")));
                }
                Ok(z.iter().map(|z| a + b * z + c * z * z).collect())
            }
            Self::Table(levels) => {
                if levels.len() != z.len() {
                    return Err(Error::Simulation(format!(
                        "table has {} levels for {} intervals",
                        levels.len(),
                        z.len()
                    )));
                }
                Ok(levels.clone())
            }
        }
    }

    /// Covariate value maximizing a concave response.
    pub fn vertex(&self) -> Option<f64> {
        match self {
            Self::Concave { b, c, .. } => Some(-b / (2.0 * c)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub response: Response,
    /// One value per grid interval, most recent first.
    pub covariate: Vec<f64>,
    pub covariate_name: String,
    pub grid: Grid,
    pub schedule: Schedule,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub tree: TimeTree,
    /// The covariate on its original scale.
    pub covariates: CovariateTable,
    pub truth: Vec<f64>,
}

pub fn make_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    if spec.covariate.len() != spec.grid.intervals() {
        return Err(Error::Simulation(format!(
            "covariate has {} values for {} intervals",
            spec.covariate.len(),
            spec.grid.intervals()
        )));
    }
    let truth = spec.response.truth(&spec.covariate)?;
    let tree = simulate_tree(&SimSpec {
        schedule: spec.schedule.clone(),
        ne: PiecewiseNe::from_log(spec.grid.clone(), &truth)?,
        seed: spec.seed,
        stream: 0,
    })?;
    let covariates = CovariateTable::new(
        vec![spec.covariate_name.clone()],
        vec![spec.covariate.iter().map(|&v| Some(v)).collect()],
    )?;
    Ok(Scenario {
        spec: spec.clone(),
        tree,
        covariates,
        truth,
    })
}

/// Paths written by [`write_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFiles {
    pub tree: PathBuf,
    pub tip_dates: PathBuf,
    pub covariates: PathBuf,
    pub truth: PathBuf,
    pub description: PathBuf,
    pub config: PathBuf,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(", ")
}

/// Write the scenario as CLI-ready inputs plus the recorded truth.
pub fn write_scenario(dir: &Path, s: &Scenario) -> Result<ScenarioFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let files = ScenarioFiles {
        tree: dir.join("tree.nwk"),
        tip_dates: dir.join("tip_dates.csv"),
        covariates: dir.join("covariates.csv"),
        truth: dir.join("truth.csv"),
        description: dir.join("scenario.txt"),
        config: dir.join("run.cfg"),
    };
    let write = |p: &Path, text: String| fs::write(p, text).map_err(|e| Error::from(e).in_file(p));

    write(&files.tree, serialize_newick(&s.tree) + "\n")?;

    let mut dates = csv::Writer::from_writer(Vec::new());
    dates.write_record(["label", "date"])?;
    for (_, node) in s.tree.tips() {
        dates.write_record([node.label.as_deref().unwrap_or(""), &fmt_f64(node.height)])?;
    }
    write(&files.tip_dates, String::from_utf8(dates.into_inner().expect("in-memory")).expect("utf8"))?;

    let mut cov = csv::Writer::from_writer(Vec::new());
    cov.write_record([&s.spec.covariate_name])?;
    for &v in &s.spec.covariate {
        cov.write_record([fmt_f64(v)])?;
    }
    write(&files.covariates, String::from_utf8(cov.into_inner().expect("in-memory")).expect("utf8"))?;

    let mut truth = csv::Writer::from_writer(Vec::new());
    truth.write_record(["interval", "start", "end", "covariate", "theta", "ne"])?;
    for (k, &theta) in s.truth.iter().enumerate() {
        let (lo, hi) = s.spec.grid.bounds(k);
        truth.write_record([
            (k + 1).to_string(),
            fmt_f64(lo),
            if hi.is_finite() { fmt_f64(hi) } else { "root".into() },
            fmt_f64(s.spec.covariate[k]),
            fmt_f64(theta),
            fmt_f64(theta.exp()),
        ])?;
    }
    write(&files.truth, String::from_utf8(truth.into_inner().expect("in-memory")).expect("utf8"))?;

    let mut desc = String::new();
    let _ = writeln!(desc, "response = {}", s.spec.response.name());
    match &s.spec.response {
        Response::Linear { a, b } => {
            let _ = writeln!(desc, "a = {}\nb = {}", fmt_f64(*a), fmt_f64(*b));
        }
        Response::Concave { a, b, c } => {
            let _ = writeln!(desc, "a = {}\nb = {}\nc = {}", fmt_f64(*a), fmt_f64(*b), fmt_f64(*c));
        }
        Response::Table(levels) => {
            let _ = writeln!(desc, "levels = {}", join(levels));
        }
    }
    let _ = writeln!(desc, "covariate_name = {}", s.spec.covariate_name);
    let _ = writeln!(desc, "covariate = {}", join(&s.spec.covariate));
    let _ = writeln!(desc, "grid_points = {}", join(s.spec.grid.points()));
    let sampling: Vec<String> = s
        .spec
        .schedule
        .groups()
        .iter()
        .map(|(t, n)| format!("{}:{n}", fmt_f64(*t)))
        .collect();
    let _ = writeln!(desc, "sampling = {}", sampling.join(", "));
    let _ = writeln!(desc, "seed = {}", s.spec.seed);
    let _ = writeln!(desc, "# realized root height {}", fmt_f64(s.tree.root_height()));
    write(&files.description, desc)?;

    let cfg = format!(
        "tree = tree.nwk\ntip_dates = tip_dates.csv\ndate_direction = backward\ncovariates = covariates.csv\n\
         standardize = true\ngrid_points = {}\nseed = {}\n",
        join(s.spec.grid.points()),
        s.spec.seed
    );
    write(&files.config, cfg)?;
    Ok(files)
}

/// Parse a `key = value` scenario description (the format [`write_scenario`]
/// emits as `scenario.txt`).
///
/// Keys: `response` (linear | concave | table), `a`, `b`, `c`, `levels`,
/// `covariate`, `covariate_name`, `grid_points` or `cutoff` + `intervals`,
/// `taxa` (isochronous) or `sampling` (`time:count` pairs), `seed`.
pub fn parse_sim_spec(text: &str) -> Result<ScenarioSpec> {
    let mut response = None;
    let (mut a, mut b, mut c) = (0.0, 0.0, None);
    let mut levels = None;
    let mut covariate = None;
    let mut covariate_name = "covariate".to_string();
    let mut grid_points = None;
    let mut cutoff = None;
    let mut intervals = None;
    let mut taxa = None;
    let mut sampling = None;
    let mut seed = 1;
    for (line, key, v) in key_values(text)? {
        let v = v.as_str();
        match key.as_str() {
            "response" => response = Some((line, v.to_string())),
            "a" => a = parse_value(line, &key, v)?,
            "b" => b = parse_value(line, &key, v)?,
            "c" => c = Some(parse_value(line, &key, v)?),
            "levels" => levels = Some(parse_list::<f64>(line, &key, v)?),
            "covariate" => covariate = Some(parse_list::<f64>(line, &key, v)?),
            "covariate_name" => covariate_name = v.to_string(),
            "grid_points" => grid_points = Some(parse_list::<f64>(line, &key, v)?),
            "cutoff" => cutoff = Some(parse_value::<f64>(line, &key, v)?),
            "intervals" => intervals = Some(parse_value::<usize>(line, &key, v)?),
            "taxa" => taxa = Some(parse_value::<usize>(line, &key, v)?),
            "sampling" => {
                let groups = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|pair| {
                        let (t, n) = pair.split_once(':').ok_or_else(|| Error::Config {
                            line,
                            msg: format!("sampling entries are time:count, got '{pair}'"),
                        })?;
                        Ok((parse_value::<f64>(line, &key, t.trim())?, parse_value::<usize>(line, &key, n.trim())?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                sampling = Some(groups);
            }
            "seed" => seed = parse_value(line, &key, v)?,
            _ => {
                return Err(Error::Config {
                    line,
                    msg: format!("unknown key '{key}'"),
                })
            }
        }
    }
    let missing = |msg: &str| Error::Config {
        line: 0,
        msg: msg.to_string(),
    };
    let grid = match (grid_points, cutoff, intervals) {
        (Some(p), None, None) => Grid::from_points(p)?,
        (None, Some(c), Some(m)) => build_grid(c, m)?,
        _ => return Err(missing("give either 'grid_points' or 'cutoff' and 'intervals'")),
    };
    let schedule = match (taxa, sampling) {
        (Some(n), None) => Schedule::isochronous(n)?,
        (None, Some(groups)) => Schedule::new(groups)?,
        (Some(n), Some(groups)) => {
            let s = Schedule::new(groups)?;
            if s.tips() != n {
                return Err(missing("'taxa' disagrees with the 'sampling' counts"));
            }
            s
        }
        (None, None) => return Err(missing("give 'taxa' or 'sampling'")),
    };
    let (line, kind) = response.ok_or_else(|| missing("'response' is required"))?;
    let response = match kind.as_str() {
        "linear" => Response::Linear { a, b },
        "concave" => Response::Concave {
            a,
            b,
            c: c.ok_or_else(|| missing("concave response needs 'c'"))?,
        },
        "table" => Response::Table(levels.ok_or_else(|| missing("table response needs 'levels'"))?),
        other => {
            return Err(Error::Config {
                line,
                msg: format!("response must be linear, concave or table, got '{other}'"),
            })
        }
    };
    let covariate = match covariate {
        Some(z) => z,
        None if matches!(response, Response::Table(_)) => (0..grid.intervals()).map(|k| k as f64).collect(),
        None => return Err(missing("'covariate' is required")),
    };
    Ok(ScenarioSpec {
        response,
        covariate,
        covariate_name,
        grid,
        schedule,
        seed,
    })
}
