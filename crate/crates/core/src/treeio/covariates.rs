//! Grid-aligned covariate tables.
//!
//! Two CSV layouts are accepted. The row layout has one header of covariate
//! names and one data row per grid interval, most recent interval first. The
//! time layout starts with a `time` column; rows are binned into the interval
//! `(g_{k-1}, g_k]` containing their height and averaged within a bin. Empty
//! cells and `NA` are missing; blank lines are skipped, so a single-column
//! file must spell a missing row as `NA`.

use super::tree::DateReference;
use crate::coalescent::Grid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    names: Vec<String>,
    /// `values[p][k]`; missing entries hold NaN.
    values: Vec<Vec<f64>>,
    missing: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, Copy)]
pub struct CovariateOptions {
    pub standardize: bool,
    /// Maps the time column onto heights; `None` reads times as heights.
    pub reference: Option<DateReference>,
}

impl Default for CovariateOptions {
    fn default() -> Self {
        Self {
            standardize: true,
            reference: None,
        }
    }
}

impl CovariateTable {
    /// `values[p][k]` with `None` for missing entries.
    pub fn new(names: Vec<String>, values: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::Covariates(format!(
                "{} names for {} covariate rows",
                names.len(),
                values.len()
            )));
        }
        let m = values.first().map_or(0, Vec::len);
        let mut vals = Vec::with_capacity(values.len());
        let mut mask = Vec::with_capacity(values.len());
        for (name, row) in names.iter().zip(&values) {
            if row.len() != m {
                return Err(Error::Covariates(format!("covariate '{name}' has ragged length")));
            }
            if row.iter().all(Option::is_none) {
                return Err(Error::Covariates(format!("covariate '{name}' is entirely missing")));
            }
            if row.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Covariates(format!("covariate '{name}' has non-finite values")));
            }
            vals.push(row.iter().map(|v| v.unwrap_or(f64::NAN)).collect());
            mask.push(row.iter().map(Option::is_none).collect());
        }
        Ok(Self {
            names,
            values: vals,
            missing: mask,
        })
    }

    /// A table with no covariates.
    pub fn empty() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            missing: Vec::new(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn count(&self) -> usize {
        self.names.len()
    }

    pub fn intervals(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.values[p]
    }

    pub fn missing(&self) -> &[Vec<bool>] {
        &self.missing
    }

    pub fn is_missing(&self, p: usize, k: usize) -> bool {
        self.missing[p][k]
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().flatten().any(|&m| m)
    }

    /// Mean and sample standard deviation over the observed entries of row `p`.
    pub fn observed_moments(&self, p: usize) -> (f64, f64) {
        let obs: Vec<f64> = self.values[p]
            .iter()
            .zip(&self.missing[p])
            .filter(|(_, &m)| !m)
            .map(|(&v, _)| v)
            .collect();
        let n = obs.len() as f64;
        let mean = obs.iter().sum::<f64>() / n;
        let var = obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    /// Center and scale each row using observed entries only.
    pub fn standardize(&mut self) -> Result<()> {
        for p in 0..self.count() {
            let observed = self.missing[p].iter().filter(|&&m| !m).count();
            let (mean, sd) = self.observed_moments(p);
            if observed < 2 || !(sd > 0.0) {
                return Err(Error::Covariates(format!(
                    "covariate '{}' has zero variance over its observed entries",
                    self.names[p]
                )));
            }
            for (v, &m) in self.values[p].iter_mut().zip(&self.missing[p]) {
                if !m {
                    *v = (*v - mean) / sd;
                }
            }
        }
        Ok(())
    }
}

fn parse_cell(cell: &str, line: u64, name: &str) -> Result<Option<f64>> {
    if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| Error::Covariates(format!("line {line}: invalid value '{cell}' for '{name}'")))
}

/// Read a covariate CSV and align it to the grid's intervals.
pub fn load_covariates(table: &str, grid: &Grid, options: &CovariateOptions) -> Result<CovariateTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(table.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() || headers.iter().any(String::is_empty) {
        return Err(Error::Covariates("header row must name every column".into()));
    }
    let m = grid.intervals();
    let timed = headers[0].eq_ignore_ascii_case("time");
    let names: Vec<String> = if timed { headers[1..].to_vec() } else { headers.clone() };
    if names.is_empty() {
        return Err(Error::Covariates("no covariate columns".into()));
    }
    let p_count = names.len();

    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    if timed {
        let mut sums = vec![vec![0.0; m]; p_count];
        let mut counts = vec![vec![0usize; m]; p_count];
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let t = parse_cell(&record[0], line, "time")?
                .ok_or_else(|| Error::Covariates(format!("line {line}: missing time")))?;
            let height = options.reference.map_or(t, |r| r.to_height(t));
            if height < 0.0 {
                return Err(Error::Covariates(format!(
                    "line {line}: time {t} lies after the most recent sample"
                )));
            }
            let k = grid.interval_of(height);
            for p in 0..p_count {
                if let Some(v) = parse_cell(&record[p + 1], line, &names[p])? {
                    sums[p][k] += v;
                    counts[p][k] += 1;
                }
            }
        }
        for p in 0..p_count {
            rows.push(
                (0..m)
                    .map(|k| (counts[p][k] > 0).then(|| sums[p][k] / counts[p][k] as f64))
                    .collect(),
            );
        }
    } else {
        let mut by_interval = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let row = (0..p_count)
                .map(|p| parse_cell(&record[p], line, &names[p]))
                .collect::<Result<Vec<_>>>()?;
            by_interval.push(row);
        }
        if by_interval.len() != m {
            return Err(Error::Covariates(format!(
                "{} data rows but the grid has {m} intervals",
                by_interval.len()
            )));
        }
        for p in 0..p_count {
            rows.push(by_interval.iter().map(|r| r[p]).collect());
        }
    }

    let mut out = CovariateTable::new(names, rows)?;
    if options.standardize {
        out.standardize()?;
    }
    Ok(out)
}
