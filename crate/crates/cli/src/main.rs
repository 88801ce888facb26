//! `dap`: synthetic data generation, dataset preparation, training,
//! evaluation, prediction and model inspection.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "dap", version, about = "Driver action prediction with deep bidirectional RNNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic sessions with planted actions.
    Synth(SynthArgs),
    /// Resample, recognize actions and build train/val/test example sets.
    Prepare(PrepareArgs),
    /// Train a classifier on a prepared example set.
    Train(TrainArgs),
    /// Piecewise metrics versus time-to-event for one or two models.
    Eval(EvalArgs),
    /// Slide a model over a session file and write per-window predictions.
    Predict(PredictArgs),
    /// Print a summary of a model file.
    Inspect(InspectArgs),
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be a positive number, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn non_negative_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be >= 0, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn split_fractions(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    let [a, b, c] = parts[..] else {
        return Err(format!("expected three comma-separated fractions, got {}", parts.len()));
    };
    if [a, b, c].iter().any(|f| !(*f >= 0.0)) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(format!("fractions must be non-negative and sum to 1, got {s}"));
    }
    Ok([a, b, c])
}

#[derive(Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub sessions: u64,
    /// Session length in minutes.
    #[arg(long, default_value_t = 10.0, value_parser = positive_f64)]
    pub minutes: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Braking events per minute.
    #[arg(long, value_parser = non_negative_f64)]
    pub braking_rate: Option<f64>,
    /// Lane changes per minute, per direction.
    #[arg(long, value_parser = non_negative_f64)]
    pub lane_change_rate: Option<f64>,
    /// Turns per minute, per direction.
    #[arg(long, value_parser = non_negative_f64)]
    pub turn_rate: Option<f64>,
    #[arg(long, value_parser = positive_f64)]
    pub min_gap: Option<f64>,
    /// Precursor lead in seconds.
    #[arg(long, value_parser = positive_f64)]
    pub lead: Option<f64>,
    #[arg(long, value_parser = non_negative_f64)]
    pub lead_jitter: Option<f64>,
    #[arg(long, value_parser = non_negative_f64)]
    pub amplitude: Option<f64>,
    #[arg(long, value_parser = non_negative_f64)]
    pub noise: Option<f64>,
    /// Emulate an individual driver (perturbed lead, amplitude and noise).
    #[arg(long)]
    pub driver: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TaskArg {
    All,
    Braking,
    LaneChange,
    Turns,
}

#[derive(Args, Serialize)]
pub struct PrepareArgs {
    /// Directory holding `*.session` files.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = TaskArg::All)]
    pub task: TaskArg,
    /// Negatives kept per positive.
    #[arg(long, default_value_t = 1.5, value_parser = positive_f64)]
    pub ratio: f64,
    /// Prediction horizon in seconds.
    #[arg(long, default_value_t = 5.0, value_parser = positive_f64)]
    pub horizon: f64,
    /// Window length in frames.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub window: u64,
    /// Frames between consecutive windows.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub stride: u64,
    /// Windows ending this long after an onset are dropped.
    #[arg(long, default_value_t = 2.0, value_parser = non_negative_f64)]
    pub exec_len: f64,
    #[arg(long, default_value = "0.7,0.15,0.15", value_parser = split_fractions)]
    pub split: [f64; 3],
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// A single prediction task.
#[derive(Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SingleTask {
    Braking,
    LaneChange,
    Turns,
}

#[derive(Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ArchArg {
    Bi,
    Uni,
}

#[derive(Args, Serialize)]
pub struct TrainArgs {
    /// Directory written by `prepare`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub task: SingleTask,
    #[arg(long, value_enum, default_value_t = ArchArg::Bi)]
    pub arch: ArchArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    pub hidden: u64,
    #[arg(long, default_value_t = 1000)]
    pub epochs: u64,
    #[arg(long, default_value_t = 1e-2, value_parser = positive_f64)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1, value_parser = positive_f64)]
    pub decay_factor: f64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub decay_every: u64,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: u64,
    #[arg(long, default_value_t = 10.0, value_parser = positive_f64)]
    pub clip: f64,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch CSV log; defaults to `<out>` with extension `epochs.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct EvalArgs {
    /// Model file; give twice to also write a comparison report.
    #[arg(long = "model", required = true, num_args = 1)]
    pub models: Vec<PathBuf>,
    /// Example-set file to evaluate on.
    #[arg(long)]
    pub examples: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5, value_parser = positive_f64)]
    pub bin_width: f64,
    /// Accuracy margin for the earliest-advantage bin of a comparison.
    #[arg(long, default_value_t = 0.0, value_parser = non_negative_f64)]
    pub margin: f64,
}

#[derive(Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub stride: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Write the summary here (plus a manifest) instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Prepare(a) => commands::prepare(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => {
            if a.models.len() > 2 {
                use clap::CommandFactory;
                Cli::command()
                    .error(clap::error::ErrorKind::TooManyValues, "eval takes at most two --model flags")
                    .exit();
            }
            commands::eval(&a)
        }
        Command::Predict(a) => commands::predict(&a),
        Command::Inspect(a) => commands::inspect(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
