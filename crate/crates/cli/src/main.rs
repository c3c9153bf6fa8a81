mod config;
mod detect;
mod evaluate;
mod generate;
mod output;
mod overlay;
mod segment;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::config::{FileConfig, Range, Size};

/// Rail valve inspection: synthetic data, two-step segmentation, geometric
/// fault detection and scoring.
#[derive(Debug, Parser)]
#[command(name = "valve-inspect", version)]
struct Cli {
    /// `key = value` config file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labelled synthetic corpus with ground-truth masks.
    Generate(GenerateArgs),
    /// Run the coarse-to-fine segmentation pipeline over a manifest.
    Segment(SegmentArgs),
    /// Classify valve masks and score against truth labels when present.
    Detect(DetectArgs),
    /// Score a prediction manifest against a truth manifest.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of scenes.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tilt magnitude range in degrees, `lo,hi`.
    #[arg(long, allow_hyphen_values = true)]
    tilt_range: Option<Range>,
    #[arg(long)]
    faulty_fraction: Option<f64>,
    /// Image size, `WxH`.
    #[arg(long)]
    image_size: Option<Size>,
    /// Distractor blobs per scene.
    #[arg(long)]
    clutter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Backend for both stages: `oracle`, `band:<lo>,<hi>`, `file:<dir>`.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    coarse_backend: Option<String>,
    #[arg(long)]
    fine_backend: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f32>,
    #[arg(long)]
    crop_size: Option<Size>,
    #[arg(long)]
    coarse_size: Option<Size>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory of `<id>.png` masks; defaults to the manifest's mask column.
    #[arg(long)]
    masks: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write annotated PNGs under `<out>/overlays`.
    #[arg(long)]
    overlay: bool,
    /// Exit non-zero unless truth labels are present and nothing was skipped.
    #[arg(long)]
    fail_on_skip: bool,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Manifest of predicted masks and/or labels.
    #[arg(long)]
    pred: PathBuf,
    /// Manifest of truth masks and/or labels.
    #[arg(long)]
    truth: PathBuf,
    /// Also write the scores as TSV into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Bad input from the operator, as opposed to a failure while running.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Generate(a) => generate::run(a, &file),
        Command::Segment(a) => segment::run(a, &file),
        Command::Detect(a) => detect::run(a, &file),
        Command::Eval(a) => evaluate::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VALVE_INSPECT_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
