use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use e2m::simgen::DgpKind;
use e2m::SpaceId;
use serde::{Deserialize, Serialize};

fn space_name(s: &str) -> Result<String, String> {
    s.parse::<SpaceId>().map(|id| id.to_string()).map_err(|e| e.to_string())
}

fn dgp_name(s: &str) -> Result<String, String> {
    s.parse::<DgpKind>().map(|k| k.to_string()).map_err(|e| e.to_string())
}

#[derive(Parser, Debug, Clone, Serialize, Deserialize)]
#[command(name = "e2m", version, about = "Regression with metric-space valued responses")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GlobalArgs {
    /// Master seed for every random stream.
    #[arg(long, global = true, env = "E2M_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for Monte Carlo runs and CV folds.
    #[arg(long, global = true, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub jobs: Option<usize>,
    /// Where to write the run manifest (default: next to the main output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    #[serde(skip)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a simulated dataset with truth at fresh test inputs.
    Simulate(SimulateArgs),
    /// Fit a model and write its checkpoint.
    Train(TrainArgs),
    /// Predict responses from a checkpoint.
    Predict(PredictArgs),
    /// MSPE of a checkpoint against truth or held-out observations.
    Evaluate(EvaluateArgs),
    /// Cross-validated search over λ, depth and width.
    Gridsearch(GridArgs),
    /// Cross-validated MSPE of one configuration.
    Cv(CvArgs),
    /// Global Fréchet regression predictions.
    BaselineGfr(GfrArgs),
    /// Monte Carlo AMSPE on a simulated scenario.
    Benchmark(BenchmarkArgs),
    /// AMSPE over a grid of entropy weights.
    Sensitivity(SensitivityArgs),
    /// Lipschitz, gradient, mean and entropy self-checks.
    Audit(AuditArgs),
    /// Repeat the run recorded in a manifest.
    Rerun(RerunArgs),
}

/// Response space description; a sidecar `Y.json` next to the response file
/// takes precedence over inference from row lengths.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct SpaceArgs {
    /// wasserstein1d | network | spd-power | spd-bw (aliases: dist, net, power, bw)
    #[arg(long, value_parser = space_name)]
    pub space: Option<String>,
    /// Quantile grid size.
    #[arg(long = "grid")]
    pub m: Option<usize>,
    /// Network node count.
    #[arg(long = "nodes")]
    pub v: Option<usize>,
    /// SPD matrix dimension.
    #[arg(long = "dim")]
    pub l: Option<usize>,
    /// Power metric exponent.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Barycenter iteration cap (spd-bw).
    #[arg(long, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub max_iter: Option<usize>,
    #[arg(long, value_parser = ["native", "samples", "adjacency"])]
    pub format: Option<String>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Entropy weight λ; negative values sharpen the weights.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// Hidden layer widths, e.g. 32,32.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Anchor count (default: every training row).
    #[arg(long)]
    pub anchors: Option<usize>,
    #[arg(long)]
    pub holdout_frac: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// distribution | network | spd-power | spd-bw
    #[arg(long, value_parser = dgp_name)]
    pub dgp: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub test_size: usize,
    /// Monte Carlo draws per test input for SPD truth oracles.
    #[arg(long)]
    pub oracle_draws: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[command(flatten)]
    pub space: SpaceArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub x: PathBuf,
    /// Prediction CSV in the space's native row format.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the simplex weights, one row per input.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub x: PathBuf,
    /// Conditional means at `--x`.
    #[arg(long, conflicts_with = "y")]
    pub truth: Option<PathBuf>,
    /// Observed responses at `--x`.
    #[arg(long, required_unless_present = "truth")]
    pub y: Option<PathBuf>,
    #[command(flatten)]
    pub space: SpaceArgs,
    /// JSON report path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GridArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[command(flatten)]
    pub space: SpaceArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub depths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// JSON report path; the table goes to the same stem with `.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CvArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[command(flatten)]
    pub space: SpaceArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value = "kfold", value_parser = ["loo", "kfold", "repeated"])]
    pub scheme: String,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Repetitions for the repeated scheme.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GfrArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[command(flatten)]
    pub space: SpaceArgs,
    #[arg(long)]
    pub x_test: PathBuf,
    /// Conditional means at `--x-test`, for an MSPE report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Prediction CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkArgs {
    #[arg(long, value_parser = dgp_name)]
    pub dgp: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, default_value_t = 200)]
    pub test_size: usize,
    /// Comma-separated subset of e2m,gfr.
    #[arg(long, value_delimiter = ',', default_value = "e2m,gfr", value_parser = ["e2m", "gfr"])]
    pub methods: Vec<String>,
    #[arg(long)]
    pub oracle_draws: Option<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value = "benchmark.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityArgs {
    /// Scenario to simulate (same names as `--dgp`).
    #[arg(long, visible_alias = "dgp", value_parser = dgp_name)]
    pub space: String,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[arg(long, default_value_t = 200)]
    pub test_size: usize,
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        default_value = "-0.1,-0.05,-0.01,0,0.01,0.05,0.1"
    )]
    pub lambdas: Vec<f64>,
    #[arg(long)]
    pub oracle_draws: Option<usize>,
    /// Training flags; the network defaults to two hidden layers of 8.
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value = "sensitivity.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct AuditArgs {
    #[arg(long, value_parser = space_name)]
    pub space: String,
    /// Weight pairs for the Lipschitz audit.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Anchors for the Lipschitz audit.
    #[arg(long, default_value_t = 5)]
    pub anchors: usize,
    #[arg(long, default_value_t = 100)]
    pub grad_instances: usize,
    #[arg(long, default_value_t = 20)]
    pub mean_instances: usize,
    #[arg(long, default_value_t = 10_000)]
    pub entropy_samples: usize,
    /// Quantile grid, node count or matrix dimension, by space.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long, default_value = "audit.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RerunArgs {
    pub manifest: PathBuf,
}
