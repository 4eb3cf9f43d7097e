//! `tooltrace`: score tool-use outputs, compute group advantages, check the
//! toy-policy gradient suite, analyze reasoning traces and synthesize or
//! re-verify trajectory datasets.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod io;

use config::{Overrides, RunConfig};

/// Exit 1 for invalid input or failed checks, 2 for I/O and oracle trouble.
#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Invalid(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

#[derive(Parser)]
#[command(name = "tooltrace", version, allow_negative_numbers = true, about = "Tool-use trace scoring, advantages and trajectory synthesis")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score model outputs against ground-truth calls.
    Score {
        /// Ground-truth JSONL ({id, ground_truth}); use with --pred instead of --input.
        #[arg(long, value_name = "PATH", requires = "pred")]
        gt: Option<PathBuf>,
        /// Prediction JSONL ({id, raw}).
        #[arg(long, value_name = "PATH", requires = "gt")]
        pred: Option<PathBuf>,
    },
    /// Per-token GRPO / DA-GRPO advantages for rollout groups.
    Advantage,
    /// Run the gradient and stagnation checks on random toy policies.
    Gradcheck {
        /// Random instances to check.
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Lazy-reasoning reports and behavior statistics.
    Analyze,
    /// Build a verified trajectory dataset from seed samples.
    Synthesize {
        /// Where the batch report goes; standard error when absent.
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
    /// Re-verify a synthesized dataset.
    Verify,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = RunConfig::resolve(&cli.overrides)?;
    match cli.command {
        Command::Score { gt, pred } => {
            if gt.is_some() {
                cfg.io.gt = gt;
                cfg.io.pred = pred;
            }
            commands::score(&cfg)
        }
        Command::Advantage => commands::advantage(&cfg),
        Command::Gradcheck { instances } => {
            if let Some(n) = instances {
                cfg.instances = n;
            }
            commands::gradcheck(&cfg)
        }
        Command::Analyze => commands::analyze(&cfg),
        Command::Synthesize { report } => {
            if report.is_some() {
                cfg.io.report = report;
            }
            commands::synthesize(&cfg)
        }
        Command::Verify => commands::verify(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
