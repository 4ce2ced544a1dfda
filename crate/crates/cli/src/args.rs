use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "wdsm", version, about = "Weighted denoising score matching experiments")]
pub struct Cli {
    /// Root seed; every run derives its streams from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Heuristic and optimal weights on an x grid at each schedule level.
    Weights(WeightsArgs),
    /// Train score networks and log energy distances.
    Train(TrainArgs),
    /// Draw samples with the reverse SDE.
    Sample(SampleArgs),
    /// Bias and variance of the second-order score estimators.
    Estimators(EstimatorArgs),
    /// Gradient covariance traces per noise level.
    Gradvar(GradvarArgs),
    /// DSM/SM loss gap against its closed form.
    Decompose(DecomposeArgs),
    /// Run every experiment in a manifest.
    Figures(FiguresArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 0.01)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = 50.0)]
    pub sigma_max: f64,
}

#[derive(Debug, Clone, Args)]
pub struct WeightsArgs {
    #[arg(long, default_value = "fig1")]
    pub density: String,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value_t = 10)]
    pub levels: usize,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    pub x_min: f64,
    #[arg(long, default_value_t = 6.0, allow_hyphen_values = true)]
    pub x_max: f64,
    #[arg(long, default_value_t = 400)]
    pub x_points: usize,
    /// File `i` is written to `<prefix><i>.csv`.
    #[arg(long, default_value = "level")]
    pub prefix: String,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, default_value = "fig1")]
    pub density: String,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// none, heuristic, optimal, optimal-expected or taylor.
    #[arg(long, default_value = "heuristic")]
    pub weighting: String,
    /// Parameter count of a one-hidden-layer network (4h + 1).
    #[arg(long, default_value_t = 25)]
    pub params: usize,
    /// Explicit hidden widths, overriding --params.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, default_value_t = 80_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 2000)]
    pub eval_every: usize,
    /// Skip energy distances before this iteration.
    #[arg(long, default_value_t = 0)]
    pub eval_from: usize,
    #[arg(long, default_value_t = 5000)]
    pub eval_samples: usize,
    #[arg(long, default_value_t = 1000)]
    pub sampler_steps: usize,
    /// Independent training runs aggregated into one CSV.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    /// Moving-average window for the smoothed columns.
    #[arg(long, default_value_t = 5)]
    pub smooth_window: usize,
    /// Skip the analytic-score reference sampler.
    #[arg(long)]
    pub no_baseline: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Separate CSV holding only the analytic-score reference curve.
    #[arg(long)]
    pub baseline_out: Option<PathBuf>,
    /// Final parameters; with several seeds, `_seed<i>` is added to the stem.
    #[arg(long)]
    pub save_model: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    /// `analytic` or `model:<path>`.
    #[arg(long, default_value = "analytic")]
    pub score: String,
    #[arg(long, default_value = "fig1")]
    pub density: String,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EstimatorArgs {
    /// t1, t2, t3 or all.
    #[arg(long, default_value = "all")]
    pub kind: String,
    #[arg(long, default_value_t = 0.2, allow_hyphen_values = true)]
    pub delta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Posterior draws per estimate.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Replicate estimates per grid point.
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value = "standard-normal")]
    pub density: String,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    pub x_min: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pub x_max: f64,
    #[arg(long, default_value_t = 9)]
    pub x_points: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GradvarArgs {
    #[arg(long, default_value = "gradvar")]
    pub density: String,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value_t = 25)]
    pub params: usize,
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, default_value_t = 10)]
    pub batches: usize,
    #[arg(long, default_value_t = 3)]
    pub seeds: usize,
    #[arg(long, default_value_t = 10)]
    pub levels: usize,
    /// Length of the heuristic-weighted training run measured along.
    #[arg(long, default_value_t = 80_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 2000)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Measure only at initialization.
    #[arg(long)]
    pub at_init: bool,
    #[arg(long, value_delimiter = ',', default_value = "heuristic,optimal")]
    pub weightings: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DecomposeArgs {
    #[arg(long, default_value = "fig1")]
    pub density: String,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,1,5")]
    pub sigmas: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub n: usize,
    /// Constant added to the analytic score to form the model.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub shift: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FiguresArgs {
    /// Manifest file; the bundled full reproduction manifest if omitted.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}
