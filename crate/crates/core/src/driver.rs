//! End-to-end runs: load inputs from a [`RunConfig`], drive one or more
//! chains with periodic checkpoints, resume them, and summarize.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::coalescent::{build_grid, CoalescentData, Grid};
use crate::error::{Error, Result};
use crate::hmc::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, VERSION as CHECKPOINT_VERSION};
use crate::hmc::{trace_header, trace_row, ChainState, Sampler, StepRecord, TraceWriter};
use crate::prior::{LatentState, Model};
use crate::summary::{summarize_dir, GridLayout, RunSummary, SummaryOptions, MIN_RETAINED};
use crate::treeio::{
    apply_tip_dates, load_covariates, parse_newick, read_tip_dates, CovariateOptions, CovariateTable, DateDirection,
    DateReference, GridSpec, RunConfig, TimeTree,
};

/// Standard deviation of the per-chain jitter applied to the starting log sizes.
const INIT_JITTER: f64 = 0.25;

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))
}

pub fn build_run_grid(spec: &GridSpec) -> Result<Grid> {
    match spec {
        GridSpec::Uniform { cutoff, intervals } => build_grid(*cutoff, *intervals),
        GridSpec::Explicit(points) => Grid::from_points(points.clone()),
    }
}

/// Parse the trees and put all loci on one time axis. With tip dates, every
/// locus is measured from the youngest sample across all loci.
pub fn load_trees(cfg: &RunConfig) -> Result<(Vec<TimeTree>, Option<DateReference>)> {
    let mut trees = cfg
        .trees
        .iter()
        .map(|p| read_file(p).and_then(|t| parse_newick(&t).map_err(|e| e.in_file(p))))
        .collect::<Result<Vec<_>>>()?;
    if cfg.tip_dates.is_empty() {
        return Ok((trees, None));
    }
    let direction = cfg.date_direction.unwrap_or(DateDirection::Forward);
    for (i, tree) in trees.iter_mut().enumerate() {
        let path = &cfg.tip_dates[if cfg.tip_dates.len() == 1 { 0 } else { i }];
        let dates = read_tip_dates(&read_file(path)?).map_err(|e| e.in_file(path))?;
        *tree = apply_tip_dates(&dates, tree, direction).map_err(|e| e.in_file(path))?;
    }
    let youngest: Vec<f64> = trees.iter().map(|t| t.reference().expect("dated").youngest).collect();
    let global = match direction {
        DateDirection::Forward => youngest.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        DateDirection::Backward => youngest.iter().copied().fold(f64::INFINITY, f64::min),
    };
    let reference = DateReference {
        direction,
        youngest: global,
    };
    for (tree, y) in trees.iter_mut().zip(youngest) {
        let offset = match direction {
            DateDirection::Forward => global - y,
            DateDirection::Backward => y - global,
        };
        if offset != 0.0 {
            let heights: Vec<f64> = tree.nodes().iter().map(|n| n.height + offset).collect();
            tree.set_heights(&heights);
        }
        tree.set_reference(Some(reference));
    }
    Ok((trees, Some(reference)))
}

/// Everything the sampler needs, built from the config's input files.
pub fn load_model(cfg: &RunConfig) -> Result<Model> {
    let (trees, reference) = load_trees(cfg)?;
    let grid = build_run_grid(&cfg.grid)?;
    let data = CoalescentData::from_trees(&trees, grid.clone())?;
    let covariates = match &cfg.covariates {
        Some(path) => load_covariates(
            &read_file(path)?,
            &grid,
            &CovariateOptions {
                standardize: cfg.standardize,
                reference,
            },
        )
        .map_err(|e| e.in_file(path))?,
        None => CovariateTable::empty(),
    };
    Model::new(data, covariates, cfg.prior.clone())
}

/// SHA-256 of the parsed configuration (including command-line overrides).
pub fn config_hash(cfg: &RunConfig) -> String {
    Sha256::digest(format!("{cfg:?}").as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn trace_path(dir: &Path, chain: usize) -> PathBuf {
    dir.join(format!("trace_{chain}.tsv"))
}

pub fn checkpoint_path(dir: &Path, chain: usize) -> PathBuf {
    dir.join(format!("checkpoint_{chain}.ckpt"))
}

/// Starting point for chain `stream`: the model default with jittered log sizes.
pub fn initial_latent(model: &Model, seed: u64, stream: u64) -> LatentState {
    let mut latent = model.initial_state();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream | 1 << 63);
    let jitter = Normal::new(0.0, INIT_JITTER).expect("valid sd");
    for t in &mut latent.theta {
        *t += jitter.sample(&mut rng);
    }
    latent
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunControl {
    /// Halt each chain once it has completed this many iterations (warmup
    /// included), leaving a checkpoint to resume from.
    pub stop_after: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutcome {
    pub chain: usize,
    pub iterations: u64,
    pub finished: bool,
    pub accepted: u64,
    pub divergent: u64,
    pub trace: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub chains: Vec<ChainOutcome>,
    pub summary: Option<RunSummary>,
}

impl RunReport {
    pub fn finished(&self) -> bool {
        self.chains.iter().all(|c| c.finished)
    }
}

struct ChainJob<'a> {
    sampler: &'a Sampler<'a>,
    cfg: &'a RunConfig,
    hash: &'a str,
    chain: usize,
    control: RunControl,
}

impl ChainJob<'_> {
    fn checkpoint(&self, st: &ChainState, writer: &mut TraceWriter) -> Result<()> {
        let trace_bytes = writer.flush()?;
        write_checkpoint(
            &checkpoint_path(&self.cfg.out_dir, self.chain),
            &Checkpoint {
                state: st.clone(),
                config_hash: self.hash.to_string(),
                trace_bytes,
            },
        )
    }

    fn drive(&self, mut st: ChainState, mut writer: TraceWriter) -> Result<ChainOutcome> {
        let model = self.sampler.model();
        let chain = &self.cfg.chain;
        let total = self.sampler.total_iterations();
        let every = chain.checkpoint_every as u64;
        let report_every = (total / 10).max(1);
        let mut exhausted = 0usize;
        while st.iteration < total {
            if self.control.stop_after.is_some_and(|s| st.iteration >= s) {
                break;
            }
            let rec: StepRecord = self.sampler.step(&mut st)?;
            exhausted += rec.exhausted_slices;
            if !rec.warmup {
                let index = rec.iteration - chain.warmup as u64;
                if index % chain.thin as u64 == 0 {
                    writer.write_row(&trace_row(model, index, &st, &rec))?;
                }
            }
            if every > 0 && st.iteration % every == 0 {
                self.checkpoint(&st, &mut writer)?;
            }
            if st.iteration % report_every == 0 {
                log::info!(
                    "chain {}: iteration {}/{} step size {:.4} accepted {} divergent {}",
                    self.chain,
                    st.iteration,
                    total,
                    st.step_size,
                    st.accepted,
                    st.divergent
                );
            }
        }
        self.checkpoint(&st, &mut writer)?;
        if exhausted > 0 {
            log::warn!("chain {}: {exhausted} slice moves hit the shrink limit", self.chain);
        }
        Ok(ChainOutcome {
            chain: self.chain,
            iterations: st.iteration,
            finished: st.iteration >= total,
            accepted: st.accepted,
            divergent: st.divergent,
            trace: trace_path(&self.cfg.out_dir, self.chain),
        })
    }
}

fn run_chains<F>(cfg: &RunConfig, control: RunControl, start: F) -> Result<RunReport>
where
    F: Fn(&Sampler, usize, &str) -> Result<(ChainState, TraceWriter)> + Sync,
{
    let model = load_model(cfg)?;
    let sampler = Sampler::new(&model, cfg.hmc.clone(), cfg.chain.clone())?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::from(e).in_file(&cfg.out_dir))?;
    let hash = config_hash(cfg);
    GridLayout::from_model(&model).write(&cfg.out_dir)?;
    write_meta(cfg, &hash)?;

    let results: Vec<Result<ChainOutcome>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.chain.chains)
            .map(|chain| {
                let (sampler, hash, start) = (&sampler, &hash, &start);
                s.spawn(move || {
                    let (st, writer) = start(sampler, chain, hash)?;
                    ChainJob {
                        sampler,
                        cfg,
                        hash,
                        chain,
                        control,
                    }
                    .drive(st, writer)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    let chains = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut report = RunReport { chains, summary: None };
    if report.finished() {
        let retained_per_chain = cfg.chain.iterations / cfg.chain.thin;
        let kept = (retained_per_chain as f64 * (1.0 - cfg.burn_in)).ceil() as usize * cfg.chain.chains;
        if kept >= MIN_RETAINED {
            let opts = SummaryOptions {
                burn_in: cfg.burn_in,
                threshold: cfg.threshold,
                ..SummaryOptions::default()
            };
            report.summary = Some(summarize_dir(&cfg.out_dir, &cfg.out_dir, &opts)?);
        } else {
            log::warn!("only about {kept} samples after burn-in; skipping the summary");
        }
    }
    Ok(report)
}

/// Start fresh chains, overwriting any previous traces in the output directory.
pub fn run(cfg: &RunConfig, control: RunControl) -> Result<RunReport> {
    run_chains(cfg, control, |sampler, chain, _| {
        let model = sampler.model();
        let seed = cfg.chain.seed;
        let st = sampler.init_chain(initial_latent(model, seed, chain as u64), seed, chain as u64)?;
        let writer = TraceWriter::create(&trace_path(&cfg.out_dir, chain), &trace_header(model))?;
        Ok((st, writer))
    })
}

/// Continue every chain from its checkpoint; the trace is cut back to the
/// checkpointed length first, so rows written after it are regenerated.
pub fn resume(cfg: &RunConfig, control: RunControl) -> Result<RunReport> {
    run_chains(cfg, control, |_, chain, hash| {
        let path = checkpoint_path(&cfg.out_dir, chain);
        let ckpt = read_checkpoint(&path)?;
        if ckpt.config_hash != hash {
            return Err(Error::Checkpoint("written by a different configuration".into()).in_file(&path));
        }
        if ckpt.state.stream != chain as u64 || ckpt.state.seed != cfg.chain.seed {
            return Err(Error::Checkpoint("seed or chain index does not match".into()).in_file(&path));
        }
        let writer = TraceWriter::resume(&trace_path(&cfg.out_dir, chain), ckpt.trace_bytes)?;
        Ok((ckpt.state, writer))
    })
}

fn write_meta(cfg: &RunConfig, hash: &str) -> Result<()> {
    let path = cfg.out_dir.join("run_meta.txt");
    let text = format!(
        "config_hash = {hash}\nseed = {}\nchains = {}\nwarmup = {}\niterations = {}\nthin = {}\n\
         preconditioning = {}\nwhiten = {}\nburn_in = {}\nthreshold = {}\ncoalgp_version = {}\n\
         checkpoint_format = {}\n",
        cfg.chain.seed,
        cfg.chain.chains,
        cfg.chain.warmup,
        cfg.chain.iterations,
        cfg.chain.thin,
        cfg.hmc.preconditioning.name(),
        cfg.prior.whiten,
        cfg.burn_in,
        cfg.threshold,
        env!("CARGO_PKG_VERSION"),
        CHECKPOINT_VERSION,
    );
    fs::write(&path, text).map_err(|e| Error::from(e).in_file(&path))
}

/// Run one chain in memory and return the retained states.
pub fn collect_samples(model: &Model, cfg: &RunConfig, stream: u64) -> Result<Vec<LatentState>> {
    let sampler = Sampler::new(model, cfg.hmc.clone(), cfg.chain.clone())?;
    let seed = cfg.chain.seed;
    let mut st = sampler.init_chain(initial_latent(model, seed, stream), seed, stream)?;
    let mut out = Vec::with_capacity(cfg.chain.iterations / cfg.chain.thin);
    while st.iteration < sampler.total_iterations() {
        let rec = sampler.step(&mut st)?;
        if !rec.warmup && (rec.iteration - cfg.chain.warmup as u64) % cfg.chain.thin as u64 == 0 {
            out.push(st.latent.clone());
        }
    }
    Ok(out)
}
