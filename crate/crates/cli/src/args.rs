//! Command-line surface.

use crate::config::{Mode, Preset};
use clap::{Args, Parser, Subcommand};
use lpme::augment::LiftMode;
use lpme::sim::{ChangeModel, Estimator};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "lpme",
    version,
    about = "Longitudinal principal manifold estimation"
)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the numerical kernels.
    #[arg(long, global = true, env = "LPME_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a simulation case, or run the factorial benchmark.
    Simulate(SimulateArgs),
    /// Fit a longitudinal (or per-time) manifold to a cloud file.
    Fit(FitArgs),
    /// Distances from a cloud (and optional truth) to a fitted model.
    Evaluate(EvaluateArgs),
    /// Enclosed volume of a fitted surface over time.
    Volume(VolumeArgs),
    /// Append (or drop) angle coordinates of a cloud file.
    Lift(LiftArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub case: Option<usize>,
    #[arg(long)]
    pub sd_alpha: Option<f64>,
    #[arg(long)]
    pub sd_beta: Option<f64>,
    #[arg(long)]
    pub sd_zeta: Option<f64>,
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub interval: Option<f64>,
    #[arg(long, value_parser = parse_change_model)]
    pub change_model: Option<ChangeModel>,
    #[arg(long)]
    pub n_per_time: Option<usize>,
    #[arg(long)]
    pub sd_iota: Option<f64>,
    /// Run the factorial design instead of a single simulation.
    #[arg(long, value_enum)]
    pub factorial: Option<Preset>,
    /// Factorial cases, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub cases: Option<Vec<usize>>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_estimator)]
    pub estimators: Option<Vec<Estimator>>,
    /// Fixed smoothing for factorial cells with fewer than four visits.
    #[arg(long)]
    pub fallback_gamma: Option<f64>,
    /// Cloud file, or the per-row result table in factorial mode.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-case summary table (factorial mode).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-time metrics; defaults to `<out>.report.csv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Cross-validation table (lpme mode).
    #[arg(long)]
    pub cv_table: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Intrinsic dimension; defaults to the cloud header's, else 1.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Fixed temporal smoothing; required with fewer than four times.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_parser = parse_lift_mode)]
    pub lift: Option<LiftMode>,
    #[arg(long)]
    pub lift_scale: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lift_center: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Noise-free samples; otherwise rows flagged `truth` in the input.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Cross-section polylines of the fitted manifold at each model time.
    #[arg(long)]
    pub export_sections: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VolumeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Voxel edge length.
    #[arg(long, required = true)]
    pub voxel: f64,
    /// Parameter lattice points per dimension.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Times to measure, comma separated; defaults to the model's times.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub times: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct LiftArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_lift_mode, required_unless_present = "drop")]
    pub mode: Option<LiftMode>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub center: Option<Vec<f64>>,
    /// Truncate to this many coordinates instead of lifting.
    #[arg(long, conflicts_with = "mode")]
    pub drop: Option<usize>,
}

fn parse_change_model(s: &str) -> Result<ChangeModel, String> {
    s.parse().map_err(|e: lpme::Error| e.to_string())
}

fn parse_lift_mode(s: &str) -> Result<LiftMode, String> {
    s.parse().map_err(|e: lpme::Error| e.to_string())
}

fn parse_estimator(s: &str) -> Result<Estimator, String> {
    match s {
        "data" => Ok(Estimator::Data),
        "lpme" => Ok(Estimator::Lpme),
        "pme" => Ok(Estimator::Pme),
        other => Err(format!("unknown estimator '{other}' (data|lpme|pme)")),
    }
}
