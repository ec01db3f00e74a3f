//! Posterior summaries of a run directory: per-interval sizes, the
//! covariate-response curve, hyperparameters and flat regions.

use std::fs;
use std::path::{Path, PathBuf};

use super::flatten::{flat_regions, FlatRegion};
use super::stats::{ess, gelman_rubin, hpd, mean, median};
use crate::error::{Error, Result};
use crate::hmc::trace::{column_safe, fmt_f64, read_trace, Trace};
use crate::prior::Model;

/// Rows required after burn-in, pooled over chains.
pub const MIN_RETAINED: usize = 100;

/// Interval bounds and covariate values as the sampler saw them (after any
/// standardization), written next to the traces so summaries need nothing else.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLayout {
    pub starts: Vec<f64>,
    /// The last interval is open-ended (`inf`).
    pub ends: Vec<f64>,
    pub names: Vec<String>,
    /// `values[p][k]`, `None` where the covariate was imputed.
    pub values: Vec<Vec<Option<f64>>>,
}

impl GridLayout {
    pub fn from_model(model: &Model) -> Self {
        let grid = model.data().grid();
        let (starts, ends) = (0..grid.intervals()).map(|k| grid.bounds(k)).unzip();
        let cov = model.covariates();
        Self {
            starts,
            ends,
            names: cov.names().iter().map(|n| column_safe(n)).collect(),
            values: (0..cov.count())
                .map(|p| {
                    cov.row(p)
                        .iter()
                        .enumerate()
                        .map(|(k, &v)| (!cov.is_missing(p, k)).then_some(v))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn intervals(&self) -> usize {
        self.starts.len()
    }

    /// Write `grid.csv` and `covariates_grid.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("grid.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::from(e).in_file(&path))?;
        w.write_record(["interval", "start", "end"])?;
        for k in 0..self.intervals() {
            w.write_record([(k + 1).to_string(), fmt_f64(self.starts[k]), fmt_f64(self.ends[k])])?;
        }
        w.flush()?;

        let path = dir.join("covariates_grid.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::from(e).in_file(&path))?;
        let mut header = vec!["interval".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for k in 0..self.intervals() {
            let mut row = vec![(k + 1).to_string()];
            row.extend(self.values.iter().map(|v| v[k].map_or("NA".into(), fmt_f64)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let parse = |path: &Path, s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Summary(format!("bad number '{s}'")).in_file(path))
        };
        let path = dir.join("grid.csv");
        let mut r = csv::Reader::from_path(&path).map_err(|e| Error::from(e).in_file(&path))?;
        let (mut starts, mut ends) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            starts.push(parse(&path, &rec[1])?);
            ends.push(parse(&path, &rec[2])?);
        }
        let path = dir.join("covariates_grid.csv");
        let mut r = csv::Reader::from_path(&path).map_err(|e| Error::from(e).in_file(&path))?;
        let names: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
        let mut values = vec![Vec::new(); names.len()];
        for rec in r.records() {
            let rec = rec?;
            for (p, v) in values.iter_mut().enumerate() {
                let cell = &rec[p + 1];
                v.push(if cell == "NA" { None } else { Some(parse(&path, cell)?) });
            }
        }
        if values.iter().any(|v| v.len() != starts.len()) {
            return Err(Error::Summary("grid and covariate files disagree on interval count".into()).in_file(&path));
        }
        Ok(Self {
            starts,
            ends,
            names,
            values,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SummaryOptions {
    pub burn_in: f64,
    pub threshold: f64,
    pub mass: f64,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            burn_in: 0.1,
            threshold: 0.05,
            mass: 0.95,
        }
    }
}

/// Median and HPD bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Band {
    pub fn of(samples: &[f64], mass: f64) -> Result<Self> {
        let (lower, upper) = hpd(samples, mass)?;
        Ok(Self {
            median: median(samples)?,
            lower,
            upper,
        })
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSummary {
    pub start: f64,
    pub end: f64,
    pub theta: Band,
    pub ne: Band,
    pub ess: f64,
    pub rhat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    /// 1-based, as written to the output files.
    pub interval: usize,
    pub value: f64,
    pub imputed: bool,
    pub g: Band,
    pub theta: Band,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateCurve {
    pub name: String,
    /// Sorted by covariate value.
    pub points: Vec<CurvePoint>,
    pub flat: Vec<FlatRegion>,
    /// Why flat regions could not be computed, if so.
    pub note: Option<String>,
}

impl CovariateCurve {
    /// Distinct covariate values with the median `g` averaged over ties.
    pub fn median_curve(&self) -> (Vec<f64>, Vec<f64>) {
        let mut z: Vec<f64> = Vec::new();
        let mut f: Vec<f64> = Vec::new();
        let mut count: Vec<f64> = Vec::new();
        for p in &self.points {
            if z.last() == Some(&p.value) {
                let i = z.len() - 1;
                f[i] += p.g.median;
                count[i] += 1.0;
            } else {
                z.push(p.value);
                f.push(p.g.median);
                count.push(1.0);
            }
        }
        let f = f.iter().zip(&count).map(|(s, c)| s / c).collect();
        (z, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub band: Band,
    pub ess: f64,
    pub rhat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub options: SummaryOptions,
    pub chains: usize,
    pub retained: usize,
    pub intervals: Vec<IntervalSummary>,
    pub curves: Vec<CovariateCurve>,
    pub params: Vec<ParamSummary>,
    pub max_rhat: Option<f64>,
    pub accept_rate: f64,
    pub divergent: usize,
}

impl PartialEq for SummaryOptions {
    fn eq(&self, o: &Self) -> bool {
        self.burn_in.to_bits() == o.burn_in.to_bits()
            && self.threshold.to_bits() == o.threshold.to_bits()
            && self.mass.to_bits() == o.mass.to_bits()
    }
}

struct Pooled<'a> {
    chains: Vec<Trace>,
    header: &'a [String],
}

impl Pooled<'_> {
    fn per_chain(&self, name: &str) -> Result<Vec<Vec<f64>>> {
        let i = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Summary(format!("trace has no column '{name}'")))?;
        Ok(self.chains.iter().map(|t| t.rows.iter().map(|r| r[i]).collect()).collect())
    }

    fn column(&self, name: &str) -> Result<(Vec<f64>, Option<f64>)> {
        let per = self.per_chain(name)?;
        let refs: Vec<&[f64]> = per.iter().map(Vec::as_slice).collect();
        let rhat = gelman_rubin(&refs);
        Ok((per.concat(), rhat))
    }
}

fn pooled_ess(per: &[Vec<f64>]) -> f64 {
    per.iter().map(|c| ess(c)).sum()
}

/// Summarize one or more chains. Pure in its inputs.
pub fn summarize_traces(traces: &[Trace], layout: &GridLayout, opts: &SummaryOptions) -> Result<RunSummary> {
    if traces.is_empty() {
        return Err(Error::Summary("no traces".into()));
    }
    if !(0.0..1.0).contains(&opts.burn_in) {
        return Err(Error::Summary(format!("burn-in fraction must lie in [0, 1), got {}", opts.burn_in)));
    }
    let header = &traces[0].header;
    if traces.iter().any(|t| &t.header != header) {
        return Err(Error::Summary("chains have different columns".into()));
    }
    let pooled = Pooled {
        chains: traces.iter().map(|t| t.burn(opts.burn_in)).collect(),
        header,
    };
    let retained: usize = pooled.chains.iter().map(|t| t.rows.len()).sum();
    if retained < MIN_RETAINED {
        return Err(Error::Summary(format!(
            "{retained} samples after burn-in; at least {MIN_RETAINED} are needed"
        )));
    }
    let mut max_rhat: Option<f64> = None;
    let mut note_rhat = |r: Option<f64>| {
        if let Some(r) = r {
            max_rhat = Some(max_rhat.map_or(r, |m: f64| m.max(r)));
        }
    };

    let m = layout.intervals();
    let mut intervals = Vec::with_capacity(m);
    let mut thetas = Vec::with_capacity(m);
    let mut gs = Vec::with_capacity(m);
    for k in 0..m {
        let per = pooled.per_chain(&format!("theta_{}", k + 1))?;
        let (theta, rhat) = pooled.column(&format!("theta_{}", k + 1))?;
        note_rhat(rhat);
        let ne: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
        intervals.push(IntervalSummary {
            start: layout.starts[k],
            end: layout.ends[k],
            theta: Band::of(&theta, opts.mass)?,
            ne: Band::of(&ne, opts.mass)?,
            ess: pooled_ess(&per),
            rhat,
        });
        gs.push(pooled.column(&format!("g_{}", k + 1))?.0);
        thetas.push(theta);
    }

    let mut curves = Vec::new();
    for (p, name) in layout.names.iter().enumerate() {
        let mut points = Vec::with_capacity(m);
        for k in 0..m {
            let (value, imputed) = match layout.values[p][k] {
                Some(v) => (v, false),
                None => (median(&pooled.column(&format!("z_{name}_{}", k + 1))?.0)?, true),
            };
            points.push(CurvePoint {
                interval: k + 1,
                value,
                imputed,
                g: Band::of(&gs[k], opts.mass)?,
                theta: Band::of(&thetas[k], opts.mass)?,
            });
        }
        points.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.interval.cmp(&b.interval)));
        let mut curve = CovariateCurve {
            name: name.clone(),
            points,
            flat: Vec::new(),
            note: None,
        };
        let (z, f) = curve.median_curve();
        match flat_regions(&z, &f, opts.threshold) {
            Ok(r) => curve.flat = r,
            Err(e) => curve.note = Some(e.to_string()),
        }
        curves.push(curve);
    }

    let mut params = Vec::new();
    let names = header.iter().filter(|h| {
        *h == "tau"
            || *h == "log_posterior"
            || *h == "log_likelihood"
            || h.starts_with("sigma2_")
            || h.starts_with("lengthscale_")
            || h.starts_with("z_")
    });
    for name in names {
        let per = pooled.per_chain(name)?;
        let (all, rhat) = pooled.column(name)?;
        if name != "log_posterior" && name != "log_likelihood" {
            note_rhat(rhat);
        }
        params.push(ParamSummary {
            name: name.clone(),
            mean: mean(&all),
            band: Band::of(&all, opts.mass)?,
            ess: pooled_ess(&per),
            rhat,
        });
    }
    let accepted = pooled.column("accepted")?.0;
    let divergent = pooled.column("divergent")?.0;

    Ok(RunSummary {
        options: *opts,
        chains: traces.len(),
        retained,
        intervals,
        curves,
        params,
        max_rhat,
        accept_rate: mean(&accepted),
        divergent: divergent.iter().filter(|&&d| d != 0.0).count(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), fmt_f64)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::from(e).in_file(path))
}

/// Write the summary CSVs and `summary_meta.txt` into `dir`.
pub fn write_summary(dir: &Path, s: &RunSummary) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let pct = fmt_f64(s.options.mass * 100.0);
    let band_cols = |prefix: &str, pointwise: bool| {
        let kind = if pointwise { "_pointwise" } else { "" };
        vec![
            format!("{prefix}_median"),
            format!("{prefix}_hpd{pct}{kind}_lower"),
            format!("{prefix}_hpd{pct}{kind}_upper"),
        ]
    };
    let band = |b: &Band| vec![fmt_f64(b.median), fmt_f64(b.lower), fmt_f64(b.upper)];
    let mut written = Vec::new();

    let path = dir.join("ne_vs_time.csv");
    let mut w = csv_writer(&path)?;
    let mut h = vec!["interval".to_string(), "start".into(), "end".into()];
    h.extend(band_cols("log_ne", false));
    h.extend(band_cols("ne", false));
    h.extend(["ess".to_string(), "rhat".into()]);
    w.write_record(&h)?;
    for (k, r) in s.intervals.iter().enumerate() {
        let mut row = vec![(k + 1).to_string(), fmt_f64(r.start), fmt_f64(r.end)];
        row.extend(band(&r.theta));
        row.extend(band(&r.ne));
        row.extend([fmt_f64(r.ess), opt(r.rhat)]);
        w.write_record(&row)?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("logne_vs_covariate.csv");
    let mut w = csv_writer(&path)?;
    let mut h = vec!["covariate".to_string(), "value".into(), "interval".into(), "imputed".into()];
    h.extend(band_cols("g", true));
    h.extend(band_cols("log_ne", true));
    w.write_record(&h)?;
    for c in &s.curves {
        for p in &c.points {
            let mut row = vec![c.name.clone(), fmt_f64(p.value), p.interval.to_string(), (p.imputed as u8).to_string()];
            row.extend(band(&p.g));
            row.extend(band(&p.theta));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("hyperparams.csv");
    let mut w = csv_writer(&path)?;
    let mut h = vec!["parameter".to_string(), "mean".into()];
    h.extend(band_cols("value", false));
    h.extend(["ess".to_string(), "rhat".into()]);
    w.write_record(&h)?;
    for p in &s.params {
        let mut row = vec![p.name.clone(), fmt_f64(p.mean)];
        row.extend(band(&p.band));
        row.extend([fmt_f64(p.ess), opt(p.rhat)]);
        w.write_record(&row)?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("flattening.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["covariate", "region_start", "region_end", "start_is_crossing", "end_is_crossing", "threshold"])?;
    for c in &s.curves {
        for r in &c.flat {
            w.write_record([
                c.name.clone(),
                fmt_f64(r.start),
                fmt_f64(r.end),
                (r.start_is_crossing as u8).to_string(),
                (r.end_is_crossing as u8).to_string(),
                fmt_f64(s.options.threshold),
            ])?;
        }
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("summary_meta.txt");
    let mut meta = format!(
        "burn_in = {}\nhpd_mass = {}\nhpd_bands = pointwise\nthreshold = {}\nchains = {}\nretained = {}\n\
         accept_rate = {}\ndivergent = {}\nmax_rhat = {}\n",
        fmt_f64(s.options.burn_in),
        fmt_f64(s.options.mass),
        fmt_f64(s.options.threshold),
        s.chains,
        s.retained,
        fmt_f64(s.accept_rate),
        s.divergent,
        opt(s.max_rhat),
    );
    if let Some(r) = s.max_rhat.filter(|&r| r > 1.1) {
        meta.push_str(&format!("# warning: max R-hat {} exceeds 1.1\n", fmt_f64(r)));
    }
    for c in &s.curves {
        if let Some(n) = &c.note {
            meta.push_str(&format!("# {}: no flat regions computed ({n})\n", c.name));
        }
    }
    fs::write(&path, meta).map_err(|e| Error::from(e).in_file(&path))?;
    written.push(path);
    Ok(written)
}

/// Trace files `trace_<i>.tsv` in `dir`, ordered by chain index.
pub fn trace_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found: Vec<(usize, PathBuf)> = fs::read_dir(dir)
        .map_err(|e| Error::from(e).in_file(dir))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let idx = name.strip_prefix("trace_")?.strip_suffix(".tsv")?.parse().ok()?;
            Some((idx, e.path()))
        })
        .collect();
    found.sort();
    if found.is_empty() {
        return Err(Error::Summary(format!("no trace_<i>.tsv files in {}", dir.display())));
    }
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Read every chain in `run_dir`, summarize, and write the results to `out_dir`.
pub fn summarize_dir(run_dir: &Path, out_dir: &Path, opts: &SummaryOptions) -> Result<RunSummary> {
    let traces = trace_paths(run_dir)?
        .iter()
        .map(|p| read_trace(p))
        .collect::<Result<Vec<_>>>()?;
    let layout = GridLayout::read(run_dir)?;
    let s = summarize_traces(&traces, &layout, opts)?;
    write_summary(out_dir, &s)?;
    Ok(s)
}
