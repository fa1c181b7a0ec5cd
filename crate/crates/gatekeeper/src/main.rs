//! Command-line front end for the cascade toolkit.
//!
//! Exit codes: 0 success, 1 validation/config error, 2 runtime failure,
//! 3 self-check failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gatekeeper::harness::config::{ExperimentConfig, LargeModelMode, Overrides};
use gatekeeper::harness::pipeline::{cmd_evaluate, cmd_finetune, cmd_pretrain, RunOptions};
use gatekeeper::harness::report::cmd_report;
use gatekeeper::harness::selfcheck;
use gatekeeper::Error;

#[derive(Parser)]
#[command(
    name = "gatekeeper",
    about = "Confidence tuning and deferral evaluation for two-model cascades",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config value.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the sweep and evaluation.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Replace the alpha grid (repeatable).
    #[arg(long = "alpha")]
    alphas: Vec<f64>,
    /// Gating function: max-softmax or nent.
    #[arg(long)]
    gating: Option<String>,
    /// Large-model mode: trained or bayes.
    #[arg(long = "large-model", value_parser = ["trained", "bayes"])]
    large_model: Option<String>,
}

impl StageArgs {
    fn load(&self) -> gatekeeper::Result<(ExperimentConfig, RunOptions)> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            out_dir: self.out.clone(),
            master_seed: self.seed,
            alphas: self.alphas.clone(),
            gating: self.gating.clone(),
            large_model: self.large_model.as_deref().map(|m| match m {
                "bayes" => LargeModelMode::Bayes,
                _ => LargeModelMode::Trained,
            }),
        })?;
        Ok((cfg, RunOptions { workers: self.workers, oracle_signal: false }))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the small and large models with plain cross-entropy.
    Pretrain(StageArgs),
    /// Fine-tune the small model for every (alpha, seed) cell.
    Finetune(StageArgs),
    /// Build records and metric reports on the held-out split.
    Evaluate {
        #[command(flatten)]
        stage: StageArgs,
        /// Replace the deferral signal with the correctness bit (plumbing
        /// check: every s_d column becomes 1).
        #[arg(long = "oracle-signal")]
        oracle_signal: bool,
    },
    /// Aggregate the metrics CSV into a summary table and SVG plots.
    Report(StageArgs),
    /// Run the acceptance suite and exit non-zero on any failure.
    Selfcheck {
        /// Worker threads for the pipeline criteria.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

fn run(cli: Cli) -> gatekeeper::Result<ExitCode> {
    match cli.command {
        Command::Pretrain(args) => {
            let (cfg, opts) = args.load()?;
            cmd_pretrain(&cfg, &opts)?;
            println!("pretrain complete; artifacts under {}", cfg.out_dir.display());
        }
        Command::Finetune(args) => {
            let (cfg, opts) = args.load()?;
            cmd_finetune(&cfg, &opts)?;
            println!(
                "finetune complete: {} cells under {}",
                cfg.finetune.alphas.len() * cfg.finetune.seeds.len(),
                cfg.out_dir.display()
            );
        }
        Command::Evaluate { stage, oracle_signal } => {
            let (cfg, mut opts) = stage.load()?;
            opts.oracle_signal = oracle_signal;
            let (_, warnings) = cmd_evaluate(&cfg, &opts)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            println!("evaluate complete; metrics at {}", cfg.out_dir.join("metrics.csv").display());
        }
        Command::Report(args) => {
            let (cfg, _) = args.load()?;
            cmd_report(&cfg)?;
            println!("report complete; plots under {}", cfg.out_dir.join("plots").display());
        }
        Command::Selfcheck { workers } => {
            let results = selfcheck::run_all(workers);
            let mut failed = 0;
            for r in &results {
                println!("{}", r.line());
                if !r.passed {
                    failed += 1;
                }
            }
            let total: f64 = results.iter().map(|r| r.seconds).sum();
            println!(
                "{}/{} criteria passed in {total:.1}s",
                results.len() - failed,
                results.len()
            );
            if failed > 0 {
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
