//! Tab-separated trace files, one row per retained iteration.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::chain::{ChainState, StepRecord};
use crate::error::{Error, Result};
use crate::prior::Model;

/// Text form of a float that parses back to the same bits.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub(crate) fn column_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect()
}

/// Column names for a model's trace.
pub fn trace_header(model: &Model) -> Vec<String> {
    let mut h: Vec<String> = ["iteration", "log_posterior", "log_likelihood", "tau"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let names: Vec<String> = model.covariates().names().iter().map(|n| column_safe(n)).collect();
    h.extend(names.iter().map(|n| format!("sigma2_{n}")));
    h.extend(names.iter().map(|n| format!("lengthscale_{n}")));
    let m = model.intervals();
    h.extend((1..=m).map(|k| format!("theta_{k}")));
    h.extend((1..=m).map(|k| format!("g_{k}")));
    for b in model.blocks() {
        h.extend(b.intervals().map(|k| format!("z_{}_{}", names[b.covariate], k + 1)));
    }
    h.push("accepted".into());
    h.push("divergent".into());
    h
}

/// One trace row for sampling iteration `index` (1-based, warmup excluded).
pub fn trace_row(model: &Model, index: u64, st: &ChainState, rec: &StepRecord) -> Vec<String> {
    let l = &st.latent;
    let min = model.settings().lengthscale_min;
    let mut row = vec![
        index.to_string(),
        fmt_f64(rec.terms.total()),
        fmt_f64(rec.terms.log_likelihood),
        fmt_f64(l.hyper.tau()),
    ];
    row.extend((0..l.hyper.covariates()).map(|p| fmt_f64(l.hyper.sigma2(p))));
    row.extend((0..l.hyper.covariates()).map(|p| fmt_f64(l.hyper.lengthscale(p, min))));
    row.extend(l.theta.iter().map(|&v| fmt_f64(v)));
    row.extend(l.g.iter().map(|&v| fmt_f64(v)));
    row.extend(l.z_missing.iter().map(|&v| fmt_f64(v)));
    row.push((rec.transition.accepted as u8).to_string());
    row.push((rec.transition.divergent as u8).to_string());
    row
}

pub struct TraceWriter {
    out: BufWriter<File>,
}

impl TraceWriter {
    /// Create (truncating) and write the header.
    pub fn create(path: &Path, header: &[String]) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::from(e).in_file(path))?;
        let mut w = Self {
            out: BufWriter::new(file),
        };
        w.write_row(header)?;
        Ok(w)
    }

    /// Reopen for appending after truncating to `bytes` (the length recorded
    /// at the last checkpoint).
    pub fn resume(path: &Path, bytes: u64) -> Result<Self> {
        let file = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| Error::from(e).in_file(path))?;
        let len = file.metadata()?.len();
        if len < bytes {
            return Err(Error::Checkpoint(format!(
                "trace {} is shorter ({len} bytes) than the checkpoint expects ({bytes})",
                path.display()
            )));
        }
        file.set_len(bytes)?;
        let mut out = BufWriter::new(file);
        use std::io::Seek;
        out.seek(std::io::SeekFrom::End(0))?;
        Ok(Self { out })
    }

    pub fn write_row(&mut self, row: &[String]) -> Result<()> {
        writeln!(self.out, "{}", row.join("\t"))?;
        Ok(())
    }

    /// Flush and return the file length.
    pub fn flush(&mut self) -> Result<u64> {
        self.out.flush()?;
        Ok(self.out.get_ref().metadata()?.len())
    }
}

/// A parsed trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Trace {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Columns whose names start with `prefix`, in file order.
    pub fn columns_with_prefix(&self, prefix: &str) -> Vec<(String, Vec<f64>)> {
        self.header
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with(prefix))
            .map(|(i, h)| (h.clone(), self.rows.iter().map(|r| r[i]).collect()))
            .collect()
    }

    /// Drop the first `fraction` of rows.
    pub fn burn(&self, fraction: f64) -> Trace {
        let skip = (self.rows.len() as f64 * fraction).floor() as usize;
        Trace {
            header: self.header.clone(),
            rows: self.rows[skip.min(self.rows.len())..].to_vec(),
        }
    }
}

pub fn read_trace(path: &Path) -> Result<Trace> {
    let file = File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    let mut lines = BufReader::new(file).lines();
    let header: Vec<String> = match lines.next() {
        Some(l) => l?.split('\t').map(str::to_string).collect(),
        None => return Err(Error::Trace(format!("{} is empty", path.display()))),
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let row = line
            .split('\t')
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| Error::Trace(format!("{} line {}: unparseable value", path.display(), i + 2)))?;
        if row.len() != header.len() {
            return Err(Error::Trace(format!(
                "{} line {}: {} columns, header has {}",
                path.display(),
                i + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(Trace { header, rows })
}
