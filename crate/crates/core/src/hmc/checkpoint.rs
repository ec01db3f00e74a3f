//! Plain-text chain checkpoints.
//!
//! Format: a `COALGP-CHECKPOINT` magic line, `version <n>`, then one
//! `key values...` line per field, terminated by `end`. Floats are written as
//! 16-digit hex of their IEEE-754 bits so a resumed chain continues
//! bit-for-bit.

use std::fs;
use std::path::Path;

use super::adapt::DualAveraging;
use super::chain::{chain_rng, ChainState};
use super::mass::MassMatrix;
use crate::error::{Error, Result};
use crate::prior::{HyperState, LatentState};
use crate::treeio::Preconditioning;

pub const MAGIC: &str = "COALGP-CHECKPOINT";
pub const VERSION: u32 = 1;

/// A chain snapshot plus run bookkeeping.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub state: ChainState,
    /// Hash of the run configuration the chain belongs to.
    pub config_hash: String,
    /// Trace file length at the time of the snapshot.
    pub trace_bytes: u64,
}

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn hex_list(v: &[f64]) -> String {
    v.iter().map(|&x| hex(x)).collect::<Vec<_>>().join(" ")
}

fn line(out: &mut String, key: &str, value: impl std::fmt::Display) {
    out.push_str(key);
    let v = value.to_string();
    if !v.is_empty() {
        out.push(' ');
        out.push_str(&v);
    }
    out.push('\n');
}

pub fn encode_checkpoint(c: &Checkpoint) -> String {
    let s = &c.state;
    let mut out = format!("{MAGIC}\nversion {VERSION}\n");
    line(&mut out, "config_hash", &c.config_hash);
    line(&mut out, "seed", s.seed);
    line(&mut out, "stream", s.stream);
    line(&mut out, "word_pos", s.rng.get_word_pos());
    line(&mut out, "iteration", s.iteration);
    line(&mut out, "accepted", s.accepted);
    line(&mut out, "divergent", s.divergent);
    line(&mut out, "trace_bytes", c.trace_bytes);
    line(&mut out, "step_size", hex(s.step_size));
    let a = &s.adapt;
    line(
        &mut out,
        "adapt",
        format!(
            "{} {} {} {} {} {}",
            hex(a.mu),
            hex(a.target),
            hex(a.log_step),
            hex(a.log_step_bar),
            hex(a.h_bar),
            a.count
        ),
    );
    let (diag, off) = s.mass.lead_bands();
    line(&mut out, "mass_mode", s.mass.mode().name());
    line(&mut out, "mass_tail", s.mass.dim() - s.mass.lead_dim());
    line(&mut out, "mass_diag", hex_list(&diag));
    line(&mut out, "mass_off", hex_list(&off));
    let l = &s.latent;
    line(&mut out, "theta", hex_list(&l.theta));
    line(&mut out, "g", hex_list(&l.g));
    line(&mut out, "log_tau", hex(l.hyper.log_tau));
    line(&mut out, "log_sigma2", hex_list(&l.hyper.log_sigma2));
    line(&mut out, "lambda", hex_list(&l.hyper.lambda));
    line(&mut out, "z_missing", hex_list(&l.z_missing));
    out.push_str("end\n");
    out
}

struct Fields<'a> {
    lines: Vec<(usize, &'a str, &'a str)>,
}

impl<'a> Fields<'a> {
    fn get(&self, key: &str) -> Result<(usize, &'a str)> {
        self.lines
            .iter()
            .find(|(_, k, _)| *k == key)
            .map(|(n, _, v)| (*n, *v))
            .ok_or_else(|| Error::Checkpoint(format!("missing field '{key}'")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let (n, v) = self.get(key)?;
        v.parse()
            .map_err(|_| Error::Checkpoint(format!("line {n}: bad value for '{key}'")))
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>> {
        let (n, v) = self.get(key)?;
        v.split_whitespace()
            .map(|h| u64::from_str_radix(h, 16).map(f64::from_bits))
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Checkpoint(format!("line {n}: bad hex float in '{key}'")))
    }

    fn float(&self, key: &str) -> Result<f64> {
        let v = self.floats(key)?;
        match v.as_slice() {
            [x] => Ok(*x),
            _ => Err(Error::Checkpoint(format!("'{key}' must hold one value"))),
        }
    }
}

pub fn decode_checkpoint(text: &str) -> Result<Checkpoint> {
    let mut it = text.lines();
    if it.next() != Some(MAGIC) {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic header)".into()));
    }
    match it.next().and_then(|l| l.strip_prefix("version ")) {
        Some(v) if v.trim() == VERSION.to_string() => {}
        Some(v) => return Err(Error::Checkpoint(format!("unsupported version {v}"))),
        None => return Err(Error::Checkpoint("missing version line".into())),
    }
    let mut lines = Vec::new();
    let mut ended = false;
    for (i, l) in text.lines().enumerate().skip(2) {
        if l == "end" {
            ended = true;
            break;
        }
        let (k, v) = l.split_once(' ').unwrap_or((l, ""));
        lines.push((i + 1, k, v));
    }
    if !ended {
        return Err(Error::Checkpoint("truncated checkpoint (no 'end' line)".into()));
    }
    let f = Fields { lines };

    let adapt_parts: Vec<&str> = f.get("adapt")?.1.split_whitespace().collect();
    if adapt_parts.len() != 6 {
        return Err(Error::Checkpoint("'adapt' needs six values".into()));
    }
    let hexf = |s: &str| {
        u64::from_str_radix(s, 16)
            .map(f64::from_bits)
            .map_err(|_| Error::Checkpoint("bad hex float in 'adapt'".into()))
    };
    let adapt = DualAveraging {
        mu: hexf(adapt_parts[0])?,
        target: hexf(adapt_parts[1])?,
        log_step: hexf(adapt_parts[2])?,
        log_step_bar: hexf(adapt_parts[3])?,
        h_bar: hexf(adapt_parts[4])?,
        count: adapt_parts[5]
            .parse()
            .map_err(|_| Error::Checkpoint("bad count in 'adapt'".into()))?,
    };
    let mode_name = f.get("mass_mode")?.1;
    let mode = Preconditioning::parse(mode_name)
        .ok_or_else(|| Error::Checkpoint(format!("unknown mass mode '{mode_name}'")))?;
    let mass = MassMatrix::from_parts(mode, f.floats("mass_diag")?, f.floats("mass_off")?, f.parse("mass_tail")?)?;

    let seed: u64 = f.parse("seed")?;
    let stream: u64 = f.parse("stream")?;
    let mut rng = chain_rng(seed, stream);
    rng.set_word_pos(f.parse("word_pos")?);

    let state = ChainState {
        latent: LatentState {
            theta: f.floats("theta")?,
            g: f.floats("g")?,
            hyper: HyperState {
                log_tau: f.float("log_tau")?,
                log_sigma2: f.floats("log_sigma2")?,
                lambda: f.floats("lambda")?,
            },
            z_missing: f.floats("z_missing")?,
        },
        step_size: f.float("step_size")?,
        adapt,
        mass,
        iteration: f.parse("iteration")?,
        rng,
        seed,
        stream,
        accepted: f.parse("accepted")?,
        divergent: f.parse("divergent")?,
    };
    Ok(Checkpoint {
        state,
        config_hash: f.get("config_hash")?.1.to_string(),
        trace_bytes: f.parse("trace_bytes")?,
    })
}

/// Write via a temporary file and rename, so a crash never leaves a torn checkpoint.
pub fn write_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode_checkpoint(c)).map_err(|e| Error::from(e).in_file(&tmp))?;
    fs::rename(&tmp, path).map_err(|e| Error::from(e).in_file(path))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    decode_checkpoint(&text).map_err(|e| e.in_file(path))
}
