//! `dogma`: simulate, label, fit anchors, encode, predict, decode and evaluate
//! dynamic occupancy grid sequences.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dogma_core::Error;

#[derive(Parser, Debug)]
#[command(name = "dogma", version, about = "Rotated-box detection tooling for dynamic occupancy grid maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON config file; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; stage seeds are derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic sequence: DGF1 frames and ground-truth labels.
    Simulate(commands::SimulateArgs),
    /// Extract labels from a frame sequence.
    Label(commands::LabelArgs),
    /// Fit an anchor set to the shapes of a label file.
    Anchors(commands::AnchorsArgs),
    /// Encode labels into per-frame DGT1 targets and DGA1 max-IoU maps.
    Encode(commands::EncodeArgs),
    /// Per-term loss of a prediction file against a target file.
    Loss(commands::LossArgs),
    /// Turn targets into predictions with the noise-injecting oracle.
    PredictOracle(commands::PredictArgs),
    /// Decode prediction tensors into detections.
    Decode(commands::DecodeArgs),
    /// Evaluate detections against labels.
    Eval(commands::EvalArgs),
    /// Run every stage end to end and write all artifacts to one directory.
    Pipeline(commands::PipelineArgs),
}

/// Exit status for each class of failure.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 3,
        Error::Empty(_) => 3,
        Error::BadMagic { .. } | Error::Version { .. } | Error::Truncated { .. } | Error::Malformed(_) | Error::Json(_) => 4,
        Error::Invariant(_) | Error::Dimension(_) => 5,
        Error::Io { .. } => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Label(a) => commands::label(&a),
        Command::Anchors(a) => commands::anchors(&a),
        Command::Encode(a) => commands::encode(&a),
        Command::Loss(a) => commands::loss(&a),
        Command::PredictOracle(a) => commands::predict_oracle(&a),
        Command::Decode(a) => commands::decode(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Pipeline(a) => commands::pipeline(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
