//! Command-line front end: synthetic data generation, surrogate attacks,
//! training, detection and evaluation.

pub mod commands;
pub mod error;
pub mod report;

use clap::{Parser, Subcommand};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "pat",
    version,
    about = "Detect adversarially perturbed video frames"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic clean videos.
    Synth(commands::SynthArgs),
    /// Apply a surrogate attack to a directory of videos.
    Attack(commands::AttackArgs),
    /// Train a detector on clean videos.
    Train(commands::TrainArgs),
    /// Score one video.
    Detect(commands::DetectArgs),
    /// Evaluate a detector on clean and attacked videos.
    Eval(commands::EvalArgs),
    /// Time transition computation and detection.
    Bench(commands::BenchArgs),
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))
}

/// Runs a parsed command and returns what should go to stdout.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Synth(a) => {
            let m = commands::cmd_synth(&a)?;
            Ok(format!(
                "wrote {} videos to {}",
                m.videos.len(),
                a.out.display()
            ))
        }
        Command::Attack(a) => {
            let m = commands::cmd_attack(&a)?;
            Ok(format!(
                "attacked {} videos into {}",
                m.videos.len(),
                a.out.display()
            ))
        }
        Command::Train(a) => {
            let r = commands::cmd_train(&a)?;
            let acc = r.history.final_accuracy().unwrap_or(0.0);
            Ok(format!(
                "trained {} epochs in {:.1}s, final accuracy {acc:.4}; model {}",
                r.history.epochs.len(),
                r.elapsed_seconds,
                a.out.display()
            ))
        }
        Command::Detect(a) => {
            let out = commands::cmd_detect(&a)?;
            if a.json {
                return to_json(&out);
            }
            let r = &out.report;
            Ok(format!(
                "{}: {:?} ({} of {} frames flagged, max score {:.4}, {:.3}s)",
                out.video_id,
                r.video_verdict,
                r.flagged_count(),
                r.per_frame_flags.len(),
                r.max_score(),
                r.elapsed_seconds
            ))
        }
        Command::Eval(a) => {
            let r = commands::cmd_eval(&a)?;
            if a.report.is_some() {
                Ok(format!(
                    "fdr {:.4}  vdr {:.4}  auc {:.4}",
                    r.fdr, r.vdr, r.auc
                ))
            } else {
                to_json(&r)
            }
        }
        Command::Bench(a) => to_json(&commands::cmd_bench(&a)?),
    }
}
