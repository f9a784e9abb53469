use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::input::InputFormat;

/// Fit and simulate centre-level trial recruitment.
#[derive(Debug, Parser)]
#[command(name = "recruit", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the Poisson-gamma model by maximum likelihood.
    Fit(FitArgs),
    /// Prediction interval for future recruits or time to a target.
    Predict(PredictArgs),
    /// Coverage study for a preset table or a custom configuration.
    Simulate(SimulateArgs),
    /// Densities of the quantile probability for a preset figure.
    Curves(CurvesArgs),
    /// Model diagnostics.
    #[command(subcommand)]
    Diagnose(DiagnoseCommand),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Centre CSV file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputFormat::Summary)]
    pub format: InputFormat,
    /// Census time; exposures are measured up to here.
    #[arg(long)]
    pub census: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    /// Recruits over a further `--horizon` time units.
    Count,
    /// Time until `--horizon` further recruits.
    Time,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub objective: ObjectiveKind,
    /// Further time (count objective) or number of recruits (time objective).
    #[arg(long)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.9)]
    pub level: f64,
    /// Also report the interval with adjusted quantile levels.
    #[arg(long)]
    pub adjusted: bool,
    /// Predict from the capped fit when the likelihood has no interior maximum.
    #[arg(long)]
    pub allow_degenerate: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Preset table: 2, 3, 4, D1-D6, F1, F2.
    #[arg(long, required_unless_present = "config", conflicts_with = "config")]
    pub table: Option<String>,
    /// JSON simulation configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed (presets default to 2024).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the replications per row (presets default to 2000).
    #[arg(long)]
    pub reps: Option<u64>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CurvesArgs {
    /// Preset figure: fig1-fig4, figD1-figD3.
    #[arg(long, required_unless_present = "config", conflicts_with = "config")]
    pub figure: Option<String>,
    /// JSON simulation configuration for a single custom curve.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Quantile level for a custom curve.
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replications per curve (default 20000).
    #[arg(long)]
    pub reps: Option<u64>,
    /// Number of interior grid points on (0, 1).
    #[arg(long, default_value_t = 99)]
    pub grid: usize,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
    /// CSV destination; the manifest goes to `<output>.manifest.json`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Manifest destination, overriding the sidecar default.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DiagnoseCommand {
    /// Q-Q pairs of per-centre counts in an initial window against the fitted
    /// negative binomial.
    Qq(QqArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QqArgs {
    /// Event-format centre CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub census: f64,
    /// Length of each centre's initial window.
    #[arg(long)]
    pub window: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}
