//! Batch command-line surface for the authorship-verification pipeline.
//!
//! Every command is a pure function of its input files, flags, and seed:
//! re-running produces byte-identical outputs, inputs are never mutated,
//! and all writes go through temp-file-then-rename.
//!
//! Exit codes: 0 success, 1 data/processing error, 2 usage error.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "authormatch",
    about = "Open-world code authorship verification for binary functions",
    version
)]
struct Cli {
    /// Optional JSON config file; keys mirror each subcommand's flags
    /// (sections named after the subcommand). Explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply cleaning rules, writing the *_clean representation fields.
    Clean(commands::clean::CleanArgs),
    /// Fit a featurizer and train the embedding model.
    Train(commands::train::TrainArgs),
    /// Score sampled same-binary pairs and report AUROC and metrics.
    Eval(commands::eval::EvalArgs),
    /// Fit same-author scores and derive the dynamic threshold.
    Calibrate(commands::calibrate::CalibrateArgs),
    /// Compare two versions of a binary and flag suspicious functions.
    Scan(commands::scan::ScanArgs),
    /// Write per-function embeddings as JSON lines.
    Embed(commands::embed::EmbedArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match config::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return report(e),
    };
    let result = match cli.command {
        Command::Clean(args) => commands::clean::run(args, &config),
        Command::Train(args) => commands::train::run(args, &config),
        Command::Eval(args) => commands::eval::run(args, &config),
        Command::Calibrate(args) => commands::calibrate::run(args, &config),
        Command::Scan(args) => commands::scan::run(args, &config),
        Command::Embed(args) => commands::embed::run(args, &config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    match e {
        CliError::Usage(message) => {
            eprintln!("usage error: {message}");
            ExitCode::from(2)
        }
        CliError::Data(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(1)
        }
    }
}
