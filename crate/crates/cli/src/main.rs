use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use coalgp::driver::{self, RunControl, RunReport};
use coalgp::simulate::{make_scenario, parse_sim_spec, write_scenario};
use coalgp::summary::{summarize_dir, SummaryOptions};
use coalgp::treeio::RunConfig;
use coalgp::Error;

#[derive(Parser)]
#[command(name = "coalgp", version, about = "Covariate-driven coalescent inference on fixed genealogies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the posterior and write traces, checkpoints and summaries.
    Run {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from checkpoints instead of starting over: a checkpoint
        /// file or the directory holding them.
        #[arg(long, value_name = "CHECKPOINT")]
        resume: Option<PathBuf>,
    },
    /// Continue every chain from its last checkpoint in the output directory.
    Resume {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Summarize traces in a run directory.
    Summarize {
        /// Run directory holding trace_<i>.tsv, grid.csv and covariates_grid.csv.
        #[arg(long, conflicts_with = "config")]
        dir: Option<PathBuf>,
        /// Take the run directory, burn-in and threshold from a config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to write the summary files (default: the run directory).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        burn_in: Option<f64>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Simulate a genealogy from a scenario description and write CLI-ready inputs.
    Simulate {
        /// Scenario description (`key = value` lines).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    burn_in: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Stop each chain after this many iterations (warmup included).
    #[arg(long)]
    stop_after: Option<u64>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::from_file(&self.config)?;
        if let Some(s) = self.seed {
            cfg.chain.seed = s;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(b) = self.burn_in {
            cfg.burn_in = b;
        }
        if let Some(t) = self.threshold {
            cfg.threshold = t;
        }
        Ok(cfg)
    }

    fn control(&self) -> RunControl {
        RunControl {
            stop_after: self.stop_after,
        }
    }
}

fn report(r: &RunReport, out: &Path) {
    for c in &r.chains {
        let state = if c.finished { "finished" } else { "stopped" };
        println!(
            "chain {}: {state} at iteration {} (accepted {}, divergent {}) -> {}",
            c.chain,
            c.iterations,
            c.accepted,
            c.divergent,
            c.trace.display()
        );
    }
    if let Some(s) = &r.summary {
        println!("summary: {} samples from {} chain(s) in {}", s.retained, s.chains, out.display());
        if let Some(rhat) = s.max_rhat.filter(|&x| x > 1.1) {
            println!("warning: max R-hat {rhat:.3} exceeds 1.1");
        }
    }
}

fn checkpoint_dir(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { run, resume } => {
            let mut cfg = run.load()?;
            let r = match resume {
                Some(ckpt) => {
                    if !ckpt.exists() {
                        bail!(Error::from(std::io::Error::from(std::io::ErrorKind::NotFound)).in_file(&ckpt));
                    }
                    cfg.out_dir = checkpoint_dir(&ckpt);
                    driver::resume(&cfg, run.control())?
                }
                None => driver::run(&cfg, run.control())?,
            };
            report(&r, &cfg.out_dir);
        }
        Command::Resume { run } => {
            let cfg = run.load()?;
            let r = driver::resume(&cfg, run.control())?;
            report(&r, &cfg.out_dir);
        }
        Command::Summarize {
            dir,
            config,
            out_dir,
            burn_in,
            threshold,
        } => {
            let mut opts = SummaryOptions::default();
            let dir = match (dir, config) {
                (Some(d), None) => d,
                (None, Some(c)) => {
                    let cfg = RunConfig::from_file(&c)?;
                    opts.burn_in = cfg.burn_in;
                    opts.threshold = cfg.threshold;
                    cfg.out_dir
                }
                _ => bail!("give --dir or --config"),
            };
            opts.burn_in = burn_in.unwrap_or(opts.burn_in);
            opts.threshold = threshold.unwrap_or(opts.threshold);
            let out = out_dir.unwrap_or_else(|| dir.clone());
            let s = summarize_dir(&dir, &out, &opts)?;
            println!("summary: {} samples from {} chain(s) in {}", s.retained, s.chains, out.display());
        }
        Command::Simulate { spec, out_dir, seed } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| Error::from(e).in_file(&spec))?;
            let mut sim = parse_sim_spec(&text).map_err(|e| e.in_file(&spec))?;
            if let Some(s) = seed {
                sim.seed = s;
            }
            let scenario = make_scenario(&sim)?;
            let files = write_scenario(&out_dir, &scenario)?;
            println!(
                "simulated {} tips, root height {}; run with: coalgp run --config {}",
                scenario.tree.tip_count(),
                scenario.tree.root_height(),
                files.config.display()
            );
        }
    }
    Ok(())
}

/// 2 for unreadable or invalid inputs, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let mut e = match err.downcast_ref::<Error>() {
        Some(e) => e,
        None => return 1,
    };
    while let Error::File { source, .. } = e {
        e = source;
    }
    match e {
        Error::Io(_)
        | Error::Csv(_)
        | Error::Newick { .. }
        | Error::InvalidTree(_)
        | Error::TipDates(_)
        | Error::Covariates(_)
        | Error::Config { .. }
        | Error::Grid(_)
        | Error::Simulation(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
