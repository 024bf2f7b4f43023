//! Command-line driver for the log anomaly detection pipeline.
//!
//! The subcommands mirror the stage order: synth -> parse -> train ->
//! detect -> recur -> eval. Every run is reproducible from its config file
//! plus seeds; exit codes are 0 success, 1 usage error, 2 data error,
//! 3 numeric divergence.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::CliError;
use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "logsift")]
#[command(about = "Batch log anomaly detection with recurring-anomaly refinement")]
struct Cli {
    /// Path to a run configuration file (defaults apply when omitted)
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. --set recurrence.lag=8 (repeatable)
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    sets: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic labeled corpus (train log, test log, labels)
    Synth,
    /// Parse logs into a template catalog and window matrices
    Parse,
    /// Fit the PCA and autoencoder detectors and calibrate thresholds
    Train,
    /// Score the test windows and emit per-detector anomaly timelines
    Detect,
    /// Refine the ensemble timeline into recurring-anomaly regions
    Recur,
    /// Score the pipeline against ground-truth labels (PPR / TPR table)
    Eval,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(path) = &cli.config {
        if !path.exists() {
            return Err(CliError::Usage(format!(
                "config file not found: {}",
                path.display()
            )));
        }
    }
    let cfg = RunConfig::resolve(cli.config.as_deref(), &cli.sets)?;
    match cli.command {
        Command::Synth => commands::cmd_synth(&cfg),
        Command::Parse => commands::cmd_parse(&cfg),
        Command::Train => commands::cmd_train(&cfg),
        Command::Detect => commands::cmd_detect(&cfg),
        Command::Recur => commands::cmd_recur(&cfg),
        Command::Eval => commands::cmd_eval(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
