//! `sstem`: score edited videos, fit aggregation weights against human
//! ratings, check agreement, and run the rating service.

mod correlate;
mod exit;
mod fit;
mod report;
mod score;
mod serve;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sstem_core::aggregation::FitMethod;
use sstem_core::model::TemporalForm;

use crate::exit::Exit;

#[derive(Parser)]
#[command(name = "sstem", version, about = "Semantic, spatial and temporal evaluation of edited videos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every video in a manifest with the three stages.
    Score(ScoreArgs),
    /// Fit aggregation weights to human scores on the optimization split.
    Fit(FitArgs),
    /// Correlate metric columns with human scores.
    Correlate(CorrelateArgs),
    /// Combine scores, weights and human scores into a report.
    Report(ReportArgs),
    /// Run the rating service.
    Serve(ServeArgs),
    /// Write per-video human score means from a rating store.
    ExportHuman(ExportHumanArgs),
    /// Check a manifest and the media it points to.
    Validate(ValidateArgs),
    /// Write a synthetic dataset with a mock backend config and human scores.
    Synth(SynthArgs),
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Backend config (JSON); mocks are used when omitted.
    #[arg(long)]
    pub backends: Option<PathBuf>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, conflicts_with = "no_cache")]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub no_cache: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct FitArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub human: PathBuf,
    /// Supplies the optimization/validation split; without it every row is
    /// used for fitting.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "ols", value_parser = parse_method)]
    pub method: FitMethod,
    #[arg(long, default_value = "direct", value_parser = parse_form)]
    pub temporal_form: TemporalForm,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CorrelateArgs {
    /// CSV whose first column holds ids and every other column a metric.
    #[arg(long)]
    pub metrics: PathBuf,
    /// Human score CSV (`video_id,mean_normalized,n_raters`).
    #[arg(long, required_unless_present = "human_column")]
    pub human: Option<PathBuf>,
    /// Take human scores from this column of the metrics file instead.
    #[arg(long, conflicts_with = "human")]
    pub human_column: Option<String>,
    /// `csv` or `markdown`; inferred from the output extension by default.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// Weights file written by `fit`.
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub human: Option<PathBuf>,
    /// `markdown`, `structured` (JSON) or `tabular` (CSV); inferred from
    /// the output extension by default.
    #[arg(long)]
    pub format: Option<String>,
    /// Timestamp written into the report; current UTC time by default.
    #[arg(long)]
    pub generated_at: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub store_dir: PathBuf,
    /// Static annotation UI bundle served at `/`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExportHumanArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub store_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    pub videos: usize,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_method(s: &str) -> Result<FitMethod, String> {
    s.parse()
}

fn parse_form(s: &str) -> Result<TemporalForm, String> {
    s.parse()
}

fn run(cli: Cli) -> Result<(), Exit> {
    match cli.command {
        Command::Score(a) => score::run(a),
        Command::Fit(a) => fit::run(a),
        Command::Correlate(a) => correlate::run(a),
        Command::Report(a) => report::run(a),
        Command::Serve(a) => serve::run(a),
        Command::ExportHuman(a) => serve::export_human(a),
        Command::Validate(a) => setup::validate(a),
        Command::Synth(a) => setup::synth(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
