use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use flowevade_core::experiment::{self, ExperimentConfig, RunDir};

#[derive(Parser)]
#[command(name = "flowevade", version, about = "Constrained adversarial flows against neural intrusion detectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Parent of the run directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Load and preprocess the dataset into containers.
    PrepareData(RunArgs),
    /// Train the target detector.
    TrainNids(RunArgs),
    /// Train generators under the configured threat model and evaluate them.
    Attack(RunArgs),
    /// Success rate over the configured perturbation grid.
    Sweep(RunArgs),
    /// Rebuild tables and the summary for a run.
    Report {
        #[command(flatten)]
        args: Option<RunArgs>,
        /// Existing run directory; replaces --config.
        #[arg(long, conflicts_with = "config")]
        run: Option<PathBuf>,
    },
}

fn open(args: &RunArgs) -> Result<(ExperimentConfig, RunDir)> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    let root = cfg.run_dir(&args.out)?;
    let dir = RunDir::create(root, &cfg)?;
    log::info!("run directory {}", dir.root.display());
    Ok((cfg, dir))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::PrepareData(a) => {
            let (cfg, dir) = open(&a)?;
            let (train, test) = experiment::prepare_data(&cfg, &dir)?;
            println!("{}: {} train and {} test flows", dir.root.display(), train.n_rows(), test.n_rows());
        }
        Command::TrainNids(a) => {
            let (cfg, dir) = open(&a)?;
            let model = experiment::train_target(&cfg, &dir)?;
            let acc = model.metrics_on_test.as_ref().map_or(f64::NAN, |m| m.accuracy);
            println!("{}: {} test accuracy {acc:.4}", dir.root.display(), model.spec.family);
        }
        Command::Attack(a) => {
            let (cfg, dir) = open(&a)?;
            let o = experiment::run_attack(&cfg, &dir)?;
            println!("{}: success rate {:.4}", dir.root.display(), o.report.success_rate);
        }
        Command::Sweep(a) => {
            let (cfg, dir) = open(&a)?;
            let s = experiment::run_sweep(&cfg, &dir)?;
            println!("{}: {} sweep points", dir.root.display(), s.points.len());
        }
        Command::Report { args, run } => {
            let (cfg, dir) = match (args, run) {
                (_, Some(root)) => {
                    let (dir, cfg) = RunDir::open(root.clone())
                        .with_context(|| format!("{} is not a run directory", root.display()))?;
                    (cfg, dir)
                }
                (Some(a), None) => open(&a)?,
                (None, None) => bail!("report needs --run or --config"),
            };
            for p in experiment::write_tables(&cfg, &dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
