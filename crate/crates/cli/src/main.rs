mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Social relation recognition over pose-guided person graphs.
#[derive(Debug, Parser)]
#[command(name = "mgr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration with [paths] and [train] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long)]
    seed: Option<u64>,
    /// Model variant: global, pog, pog-no-pose, pog+ppg or mgr.
    #[arg(long)]
    variant: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with train/val/test manifests.
    GenSynth(commands::GenSynthArgs),
    /// Train a model and write a checkpoint plus per-epoch history.
    Train(commands::TrainArgs),
    /// Evaluate a checkpoint on a manifest and write a report.
    Eval(commands::EvalArgs),
    /// Print the fused class distribution for one person pair.
    Predict(commands::PredictArgs),
    /// Print the person-object and person-pose graphs of one pair.
    InspectGraph(commands::InspectArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynth(a) => commands::gen_synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Predict(a) => commands::predict(a),
        Command::InspectGraph(a) => commands::inspect_graph(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
