mod commands;
mod error;
mod manifest;
mod params;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Radio twin of a low-altitude cellular network.
///
/// Every command writes `manifest.json` into `--out` before any other
/// output. Exit codes: 0 success, 2 input error, 3 computation error.
#[derive(Debug, Parser)]
#[command(name = "lacn-twin", version)]
pub struct Cli {
    /// Caps worker threads; outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Recorded in the manifest; drives the noise of `synth`.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Overrides a config value by dotted path, e.g. `radio.noise_figure_db=9`
    /// or `weights.beta=0.2`. Applied after all other flags.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Export the RSRP and SINR fields of a beam assignment.
    Build(BuildArgs),
    /// Fit the global offset to measurements, optionally checking drift.
    Calibrate(CalibrateArgs),
    /// Block hold-out comparison of the twin against spatial baselines.
    Validate(ValidateArgs),
    /// Greedy (or exhaustive) search over sub-beam steering angles.
    Optimize(OptimizeArgs),
    /// Coverage report of an assignment against a reference assignment.
    Evaluate(EvaluateArgs),
    /// Generate synthetic measurements along a flight trajectory.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Beam assignment JSON; the scene's baseline angles when omitted.
    #[arg(long)]
    pub assignment: Option<PathBuf>,
    /// Global calibration offset added to every predicted RSRP.
    #[arg(long, allow_negative_numbers = true)]
    pub offset_db: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MeasurementArgs {
    /// Measurement CSV, canonical columns unless `--mapping` is given.
    #[arg(long)]
    pub measurements: PathBuf,
    /// Column mapping JSON for foreign datasets.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub data: MeasurementArgs,
    /// Also compare the model at `--offset-db` against the measurements.
    #[arg(long, allow_negative_numbers = true)]
    pub drift_threshold_db: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub data: MeasurementArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub n_folds: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub layer_height_m: Option<f64>,
}

#[derive(Debug, Args)]
pub struct WeightArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub margin_cap_db: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon_gain: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Restrict coverage ratios to voxels visited by these measurements.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Altitudes of the difference heatmaps.
    #[arg(long, allow_negative_numbers = true, value_delimiter = ',')]
    pub heatmap_altitudes_m: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[command(flatten)]
    pub report: ReportArgs,
    /// Exhaustive search instead of greedy; fails above `--cap`.
    #[arg(long)]
    pub brute_force: bool,
    #[arg(long)]
    pub cap: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub report: ReportArgs,
    /// Reference assignment; the scene's baseline when omitted.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Trajectory JSON (helix or lawnmower).
    #[arg(long)]
    pub trajectory: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub noise_sigma_db: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
