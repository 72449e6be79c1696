//! `smartcal`: post-hoc confidence calibration from the command line.
//!
//! The subcommands cover the whole pipeline: generate synthetic
//! miscalibrated logits (`synth`), carve out a validation set
//! (`split`), fit a calibrator (`calibrate`), rescale held-out logits
//! (`apply`), score the result (`evaluate`), verify the analytic
//! temperature bounds (`bounds`), and sweep the indicator/loss grid
//! (`ablate`).
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data or
//! file error, 4 numeric failure. Every output file is written
//! atomically, and all inputs are read and validated before the first
//! output is created, so a failing run leaves no partial artifacts.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use smartcal_core::tempnet::Indicator;
use smartcal_core::{Error, LossKind, OptimizerKind, ValSize};

#[derive(Parser)]
#[command(
    name = "smartcal",
    version,
    about = "Post-hoc confidence calibration toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate synthetic clean and gap-distorted logit files.
    Synth(SynthArgs),
    /// Split a logit file into validation and test parts.
    Split(SplitArgs),
    /// Fit a calibrator on a validation set.
    Calibrate(CalibrateArgs),
    /// Apply a calibrator to logits, writing calibrated probabilities.
    Apply(ApplyArgs),
    /// Score probabilities, or logits optionally passed through a model.
    Evaluate(EvaluateArgs),
    /// Monte-Carlo verification of the analytic temperature bounds.
    Bounds(BoundsArgs),
    /// Indicator and loss ablation grid over one validation/test pair.
    Ablate(AblateArgs),
}

/// Calibration method fitted by `calibrate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Per-sample temperatures from the indicator network.
    Smart,
    /// One global temperature.
    Ts,
}

/// Distortion family used by `synth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistortionFamily {
    /// `T(g) = offset + slope * g`.
    Affine,
    /// Logistic ramp in the gap from `lo` to `hi`.
    Logistic,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Number of rows.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Number of classes.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the clean logits.
    #[arg(long, default_value_t = 3.0)]
    pub scale: f64,
    /// Distortion family applied on top of the clean logits.
    #[arg(long, value_enum, default_value_t = DistortionFamily::Logistic)]
    pub distortion: DistortionFamily,
    /// Affine distortion: constant term.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub offset: f64,
    /// Affine distortion: slope against the logit gap.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub slope: f64,
    /// Logistic distortion: low-gap temperature plateau.
    #[arg(long, default_value_t = 0.6)]
    pub lo: f64,
    /// Logistic distortion: high-gap temperature plateau.
    #[arg(long, default_value_t = 1.8)]
    pub hi: f64,
    /// Logistic distortion: gap at the ramp midpoint.
    #[arg(long, default_value_t = 2.5, allow_negative_numbers = true)]
    pub mid: f64,
    /// Logistic distortion: ramp width; negative flips the ramp downward.
    #[arg(long, default_value_t = -0.9, allow_negative_numbers = true)]
    pub steep: f64,
    /// Output path for the clean logits (.csv or .bin).
    #[arg(long)]
    pub out_clean: PathBuf,
    /// Output path for the distorted logits (.csv or .bin).
    #[arg(long)]
    pub out_distorted: PathBuf,
}

#[derive(Args)]
pub struct SplitArgs {
    /// Input logit file (.csv or .bin).
    #[arg(long)]
    pub logits: PathBuf,
    /// Validation size: a row count (`500`) or a fraction (`0.05`).
    #[arg(long, value_parser = parse_val_size)]
    pub size: ValSize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Preserve per-class proportions in the validation side.
    #[arg(long)]
    pub stratified: bool,
    /// Output path for the validation rows.
    #[arg(long)]
    pub out_val: PathBuf,
    /// Output path for the remaining test rows.
    #[arg(long)]
    pub out_test: PathBuf,
}

#[derive(Args)]
pub struct CalibrateArgs {
    /// Calibration method.
    #[arg(long, value_enum)]
    pub method: Method,
    /// Validation logit file fitted against.
    #[arg(long)]
    pub val: PathBuf,
    /// Output model path (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Training objective: softece, ce, mse, or brier.
    #[arg(long, default_value = "softece")]
    pub loss: LossKind,
    /// Difficulty indicator (smart only): gap, entropy, maxlogit,
    /// confidence, or meandev.
    #[arg(long)]
    pub indicator: Option<Indicator>,
    /// Hidden width of the temperature network (smart only).
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, default_value_t = 300)]
    pub epochs: u32,
    /// Learning rate.
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    /// Parameter update rule: adam or sgd.
    #[arg(long, default_value = "adam")]
    pub optimizer: OptimizerKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Soft-binning bin count.
    #[arg(long, default_value_t = 15)]
    pub bins: usize,
    /// Soft-binning sharpness.
    #[arg(long, default_value_t = 50.0)]
    pub alpha: f64,
    /// Soft-binning norm exponent (1 or 2 for training).
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    /// Training-log CSV path (default: model path with extension
    /// `train.csv`).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args)]
pub struct ApplyArgs {
    /// Calibrator model (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Logit file to rescale (.csv or .bin).
    #[arg(long)]
    pub logits: PathBuf,
    /// Output probability CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Probability CSV to score directly.
    #[arg(long)]
    pub probs: Option<PathBuf>,
    /// Logit file to score (softmax, or through --model).
    #[arg(long)]
    pub logits: Option<PathBuf>,
    /// Calibrator applied to --logits before scoring.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Equal-width bin count for the binned metrics.
    #[arg(long, default_value_t = 15)]
    pub bins: usize,
    /// Write the metric report as JSON here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the reliability table (bin,lo,hi,count,conf,acc) here.
    #[arg(long)]
    pub reliability: Option<PathBuf>,
    /// Percentile of the logit gap at which to split the reliability
    /// export into `<stem>.low.csv` and `<stem>.high.csv`.
    #[arg(long)]
    pub gap_split: Option<f64>,
}

#[derive(Args)]
pub struct BoundsArgs {
    /// Number of classes per sampled row.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Target top-1 probability to solve for (must exceed 0.5).
    #[arg(long, default_value_t = 0.8)]
    pub p: f64,
    /// Number of random rows to check.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the sampled logits.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Output CSV (g,p,K,T,lower,upper,ok).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct AblateArgs {
    /// Validation logit file fitted against.
    #[arg(long)]
    pub val: PathBuf,
    /// Test logit file scored for each configuration.
    #[arg(long)]
    pub test: PathBuf,
    /// Output CSV, one row per configuration.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub epochs: u32,
    /// Learning rate.
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    /// Bin count shared by the soft objective and the metrics.
    #[arg(long, default_value_t = 15)]
    pub bins: usize,
    /// Soft-binning sharpness.
    #[arg(long, default_value_t = 50.0)]
    pub alpha: f64,
    /// Soft-binning norm exponent.
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
}

fn parse_val_size(s: &str) -> std::result::Result<ValSize, String> {
    if let Ok(count) = s.parse::<usize>() {
        return Ok(ValSize::Count(count));
    }
    s.parse::<f64>()
        .map(ValSize::Fraction)
        .map_err(|_| format!("expected a row count or a fraction, got {s:?}"))
}

/// Map an error to the exit-code contract: configuration and usage
/// problems are 2, data and file problems 3, numeric failures 4.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        Some(Error::Numeric(_)) => 4,
        Some(_) => 3,
        None => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
