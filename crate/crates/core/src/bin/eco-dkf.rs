use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use eco_dkf::harness::oracle::run_certify_check;
use eco_dkf::harness::{emit_outputs, run_experiment, run_sweep, ExperimentConfig};

#[derive(Parser)]
#[command(name = "eco-dkf", version, about = "Event-triggered distributed Kalman filter experiments")]
struct Cli {
    /// Worker threads for trial-level parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte-Carlo experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the same experiment under several trigger rules.
    Sweep {
        /// Comma-separated rule labels.
        #[arg(long, value_delimiter = ',', default_value = "O,C,D,S,J")]
        rules: Vec<String>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare the fusion and certificate solvers against brute force.
    CertifyCheck {
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn load(config: &Path, trials: Option<usize>, seed: Option<u64>) -> eco_dkf::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: Option<PathBuf>, cfg: &ExperimentConfig) -> eco_dkf::Result<PathBuf> {
    cli.or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| eco_dkf::Error::Config("no output directory: pass --out or set output_dir".into()))
}

fn run(cli: Cli) -> eco_dkf::Result<bool> {
    match cli.command {
        Command::Run {
            config,
            out,
            trials,
            seed,
        } => {
            let cfg = load(&config, trials, seed)?;
            let dir = out_dir(out, &cfg)?;
            let run = run_experiment(&cfg, cli.threads)?;
            for path in emit_outputs(&[run.series], &[run.records], &dir)? {
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
        Command::Sweep {
            rules,
            config,
            out,
            trials,
            seed,
        } => {
            let cfg = load(&config, trials, seed)?;
            let dir = out_dir(out, &cfg)?;
            let runs = run_sweep(&cfg, &rules, cli.threads)?;
            let (series, records): (Vec<_>, Vec<_>) = runs.into_iter().map(|r| (r.series, r.records)).unzip();
            for path in emit_outputs(&series, &records, &dir)? {
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
        Command::CertifyCheck { instances, seed } => {
            let lines = run_certify_check(instances, seed)?;
            for l in &lines {
                println!("{l}");
            }
            Ok(lines.iter().all(|l| l.passed))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            // the message already nests trial, node and step context
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
