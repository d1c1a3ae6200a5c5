mod commands;
mod error;
mod run;
mod schema;

use clap::{Parser, Subcommand};
use commands::{CalibrateArgs, CompareArgs, EvaluateArgs, ExtractArgs, HandEyeArgs, SweepArgs, SynthArgs};
use error::CliError;
use std::io::Write;
use std::process::ExitCode;

/// Camera-to-robot extrinsics from keypoint detections and joint angles.
#[derive(Debug, Parser)]
#[command(name = "camrobot", version, about)]
struct Cli {
    /// Maximum worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate cam_from_base from detections or belief maps.
    Calibrate(CalibrateArgs),
    /// Extract keypoint detections from a belief-map stack.
    Extract(ExtractArgs),
    /// PCK and ADD report for pose estimates on a dataset.
    Evaluate(EvaluateArgs),
    /// ADD statistics over combinations of m frames.
    Sweep(SweepArgs),
    /// Marker-based hand-eye calibration baseline.
    Handeye(HandEyeArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Keypoint solver vs hand-eye baseline on one dataset.
    Compare(CompareArgs),
    /// Print JSON schemas of the file formats.
    Schema {
        /// One of the schema names; all schemas when omitted.
        name: Option<String>,
    },
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(CliError::argument)?;
    }
    match &cli.command {
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Extract(a) => commands::extract(a),
        Command::Evaluate(a) => commands::evaluate_cmd(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Handeye(a) => commands::handeye(a),
        Command::Synth(a) => commands::synth(a),
        Command::Compare(a) => commands::compare(a),
        Command::Schema { name } => {
            let value = match name {
                Some(n) => schema::schema(n).ok_or_else(|| {
                    CliError::argument(format!("unknown schema {n:?}; known: {}", schema::NAMES.join(", ")))
                })?,
                None => schema::all(),
            };
            let text = serde_json::to_string_pretty(&value).expect("serializable");
            let _ = writeln!(std::io::stdout(), "{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code as u8)
        }
    }
}
