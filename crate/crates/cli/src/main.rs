mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gpssm::Error;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "gpssm", version, about = "Gaussian-process state-space models, particle filters and Kalman decomposition")]
struct Cli {
    /// Directory for output artifacts.
    #[arg(long, short, global = true, default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a benchmark system and write step,x,y.
    Simulate(SimulateArgs),
    /// Kalman filter and smoother for a trend or AR(1) model.
    Kalman(KalmanArgs),
    /// Trend and seasonal decomposition with maximum-likelihood variances.
    Decomp(DecompArgs),
    /// Particle filter for a benchmark system with known parameters.
    Pf(PfArgs),
    /// Particle filter for a GP-SSM trained on transition pairs.
    Gpssm(GpssmArgs),
    /// Maximum-likelihood fit of a baseline model.
    Fit(FitArgs),
    /// Build GP training pairs from a state series or a synthetic shape.
    Pairs(PairsArgs),
    /// Run a full comparison recipe.
    Experiment(ExperimentArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    /// Sign-dependent rational dynamics, identity observation.
    F24,
    /// Cosine-driven growth model with squared observation.
    F25,
    /// Linear AR(1).
    Ar,
    /// Sign-switching AR(1).
    AsymAr,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SystemArgs {
    #[arg(long, value_enum, default_value = "f24")]
    pub system: SystemKind,
    #[arg(long)]
    pub b1: Option<f64>,
    #[arg(long)]
    pub c1_sq: Option<f64>,
    #[arg(long)]
    pub b2: Option<f64>,
    #[arg(long)]
    pub c2_sq: Option<f64>,
    /// AR coefficient.
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub a_neg: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub a_pos: Option<f64>,
    /// Process noise variance.
    #[arg(long)]
    pub tau2: Option<f64>,
    /// Observation noise variance.
    #[arg(long)]
    pub sigma2: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Initial state; drawn from N(0, 1) when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum LinearKind {
    Trend,
    Ar,
}

#[derive(Args, Debug, Serialize)]
pub struct KalmanArgs {
    /// Series CSV; the last column is used unless --column is given.
    pub data: PathBuf,
    #[arg(long)]
    pub column: Option<String>,
    #[arg(long, value_enum, default_value = "trend")]
    pub model: LinearKind,
    /// Trend order.
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long)]
    pub tau2: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Estimate the variances (and AR coefficient) by maximum likelihood.
    #[arg(long)]
    pub fit: bool,
    /// Take natural logs of the data first.
    #[arg(long)]
    pub log: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct DecompArgs {
    pub data: PathBuf,
    #[arg(long)]
    pub column: Option<String>,
    /// Seasonal period; trend only when absent.
    #[arg(long)]
    pub period: Option<usize>,
    /// Trend order; orders 1 and 2 are compared by AIC when absent.
    #[arg(long)]
    pub trend_order: Option<usize>,
    /// Also fit trend-only models and let AIC choose.
    #[arg(long)]
    pub compare_nonseasonal: bool,
    #[arg(long)]
    pub log: bool,
    #[arg(long, default_value_t = 400)]
    pub max_evals: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct FilterArgs {
    #[arg(long, default_value_t = 10_000)]
    pub particles: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "multinomial")]
    pub resampling: String,
    /// Resample only when ESS falls below this fraction of the particles.
    #[arg(long)]
    pub ess_threshold: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct PfArgs {
    pub data: PathBuf,
    #[arg(long)]
    pub column: Option<String>,
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub filter: FilterArgs,
    /// Fixed-lag smoothing window for an extra smoothed CSV.
    #[arg(long)]
    pub smooth_lag: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ObsKind {
    Identity,
    Quad10,
}

#[derive(Args, Debug, Serialize)]
pub struct GpssmArgs {
    pub data: PathBuf,
    #[arg(long)]
    pub column: Option<String>,
    /// Transition pairs CSV with header x1..xd,target.
    #[arg(long)]
    pub train_pairs: PathBuf,
    #[arg(long, default_value = "rbf(1.0)")]
    pub kernel: String,
    /// GP noise variance.
    #[arg(long, default_value_t = 0.1)]
    pub gp_noise: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, value_enum, default_value = "identity")]
    pub obs: ObsKind,
    /// Additive transition input, e.g. cos:amp=8,freq=1.2.
    #[arg(long, conflicts_with = "input_file")]
    pub input: Option<String>,
    /// Input series CSV aligned with the data.
    #[arg(long)]
    pub input_file: Option<PathBuf>,
    #[command(flatten)]
    pub filter: FilterArgs,
    /// Fit kernel hyperparameters and variances before filtering.
    #[arg(long)]
    pub fit: bool,
    #[arg(long, default_value_t = 500)]
    pub fit_particles: usize,
    #[arg(long, default_value_t = 400)]
    pub max_evals: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    Ar,
    AsymAr,
    Trend,
}

#[derive(Args, Debug, Serialize)]
pub struct FitArgs {
    pub data: PathBuf,
    #[arg(long)]
    pub column: Option<String>,
    #[arg(long, value_enum)]
    pub model: FitKind,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    /// Particles for particle-filter likelihoods.
    #[arg(long, default_value_t = 10_000)]
    pub particles: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 400)]
    pub max_evals: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    /// Noisy step at x = 0.
    Step,
    /// Noisy drift of the growth model.
    Growth,
}

#[derive(Args, Debug, Serialize)]
pub struct PairsArgs {
    /// State series CSV; omit with --synthetic.
    #[arg(required_unless_present = "synthetic")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub column: Option<String>,
    #[arg(long, conflicts_with = "data")]
    pub synthetic: Option<ShapeKind>,
    #[arg(long, default_value_t = 1)]
    pub lag: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Input to subtract from the targets, e.g. cos:amp=8,freq=1.2.
    #[arg(long)]
    pub input: Option<String>,
    #[arg(long, default_value_t = 41)]
    pub count: usize,
    #[arg(long, default_value_t = -20.0, allow_hyphen_values = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
    pub hi: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    AsymAr,
    NonlinearSmooth,
    TrendDemo,
    SeasonalDemo,
}

#[derive(Args, Debug, Serialize)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub name: ExperimentName,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Series length; each recipe has its own default.
    #[arg(long)]
    pub n: Option<usize>,
    /// Series CSV for the trend and seasonal demos instead of simulated data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub period: Option<usize>,
    /// Smaller particle counts and optimizer budgets.
    #[arg(long)]
    pub quick: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_) | Error::Parse(_) => 2,
        e if e.is_numerical() => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli.command, &cli.out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
