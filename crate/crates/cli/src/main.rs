use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use chase_core::harness::{
    load_dataset, load_scored_run, rescore_run, run_experiment, run_sweep, write_experiment, write_reports, write_sweep,
    ExperimentRun, RunConfig, Variant,
};
use chase_core::simulator::{generate_dataset, write_dataset};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chase", version, about = "Selective prediction for vesicle connectivity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the fold and simulator seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Coverage targets, comma separated.
    #[arg(long, value_delimiter = ',')]
    coverage: Vec<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory holding a generated `dataset.jsonl`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct RunDir {
    /// Directory of a finished run.
    #[arg(long)]
    out: PathBuf,
    /// Re-calibrate thresholds for these coverage targets.
    #[arg(long, value_delimiter = ',')]
    coverage: Vec<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the paired-trajectory dataset.
    Generate(Common),
    /// Train and score every configured method on every fold.
    Train(Common),
    /// Re-score a finished run from its checkpoints without retraining.
    Evaluate(RunDir),
    /// Run selected ablation variants only.
    Ablate {
        /// Variant codes, e.g. `F` or `L,B`.
        #[arg(long, value_delimiter = ',', required = true)]
        variant: Vec<Variant>,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the selector weights over the configured grid.
    Sweep(Common),
    /// Rebuild the report files from stored scores.
    Report(RunDir),
}

fn load_config(c: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg = cfg.with_seed(seed);
    }
    if !c.coverage.is_empty() {
        cfg.coverages = c.coverage.clone();
    }
    if let Some(out) = &c.out {
        cfg.out_dir = out.clone();
    }
    if let Some(d) = &c.dataset {
        cfg.dataset = Some(d.clone());
    }
    if let Some(t) = c.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finish(run: &ExperimentRun, dir: &Path) -> anyhow::Result<ExitCode> {
    let summary = std::fs::read_to_string(dir.join("summary.md"))?;
    println!("{summary}");
    let failed = run.failed_folds();
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("failed folds: {failed:?}");
        Ok(ExitCode::FAILURE)
    }
}

fn experiment(cfg: RunConfig) -> anyhow::Result<ExitCode> {
    let start = Instant::now();
    let (records, hash) = load_dataset(&cfg)?;
    let run = run_experiment(&cfg, &records, &hash)?;
    write_experiment(&run, &cfg.out_dir)?;
    tracing::info!(secs = start.elapsed().as_secs_f64(), out = %cfg.out_dir.display(), "run finished");
    finish(&run, &cfg.out_dir)
}

fn reload(dir: &RunDir, rescore: bool) -> anyhow::Result<ExitCode> {
    let mut run = if rescore { rescore_run(&dir.out)? } else { load_scored_run(&dir.out)? };
    if !dir.coverage.is_empty() {
        run.recalibrate(&dir.coverage)?;
    }
    write_reports(&run, &dir.out)?;
    finish(&run, &dir.out)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_target(false).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Generate(c) => {
            let cfg = load_config(&c)?;
            let Some(out) = c.out else { bail!("generate needs --out") };
            let ds = generate_dataset(&cfg.simulator)?;
            let manifest = write_dataset(&out, &ds)?;
            println!("{} sequences, sha256 {}", ds.records.len(), manifest.content_hash);
            Ok(ExitCode::SUCCESS)
        }
        Command::Train(c) => experiment(load_config(&c)?),
        Command::Ablate { variant, common } => {
            let mut cfg = load_config(&common)?;
            cfg.variants = variant;
            cfg.baselines.clear();
            experiment(cfg)
        }
        Command::Sweep(c) => {
            let cfg = load_config(&c)?;
            let (records, _) = load_dataset(&cfg)?;
            let run = run_sweep(&cfg, &records)?;
            write_sweep(&run, &cfg.out_dir)?;
            println!("{}", run.markdown());
            if run.failed_folds.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("failed folds: {:?}", run.failed_folds);
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Evaluate(d) => reload(&d, true),
        Command::Report(d) => reload(&d, false),
    }
}
