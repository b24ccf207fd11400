//! `mpoad`: train, score, and evaluate matrix-product-operator anomaly
//! detectors from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{parse_seeds_flag, ConfigError};

/// Exit codes: 0 success, 2 usage or configuration error, 3 data error,
/// 4 aborted on non-finite values.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    NanAbort(String),
    #[error("{0}")]
    Train(mpo_anomaly::train::TrainError),
    #[error("{0}")]
    Eval(#[from] mpo_anomaly::eval::EvalError),
}

impl From<mpo_anomaly::train::TrainError> for CliError {
    fn from(e: mpo_anomaly::train::TrainError) -> Self {
        match e {
            mpo_anomaly::train::TrainError::NanAbort { .. } => CliError::NanAbort(e.to_string()),
            other => CliError::Train(other),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Eval(_) | CliError::Train(_) => 3,
            CliError::NanAbort(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "mpoad",
    version,
    about = "One-class anomaly detection with matrix product operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file; writes model, history, manifest.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: config `out_dir`, then $MPOAD_OUT_DIR).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a data file with a trained model; prints `index,decision_log`.
    Score {
        #[arg(long)]
        model: PathBuf,
        /// CSV (label column optional) or IDX images (preprocessed).
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the one-class protocol over the config's seeds and report AUROC.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seed list overriding the config.
        #[arg(long)]
        seeds: Option<String>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Also write per-seed ROC points as `fpr,tpr` files.
        #[arg(long)]
        roc: bool,
    },
    /// Print the header of a model file.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
}

fn run() -> Result<(), CliError> {
    match Cli::parse().command {
        Command::Train { config, out } => commands::cmd_train(&config, out),
        Command::Score { model, data } => commands::cmd_score(&model, &data),
        Command::Evaluate {
            config,
            out,
            seeds,
            jobs,
            roc,
        } => {
            let seeds = seeds.as_deref().map(parse_seeds_flag).transpose()?;
            commands::cmd_evaluate(&config, out, seeds, jobs, roc)
        }
        Command::Inspect { model } => commands::cmd_inspect(&model),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
