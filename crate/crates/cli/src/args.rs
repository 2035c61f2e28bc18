use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Poisson CP decomposition of sparse count tensors.
#[derive(Debug, Parser)]
#[command(name = "cgc", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Base seed; overrides the seed in a config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for multi-start runs (0 uses every core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Run on a single worker.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic low-rank Poisson tensor.
    Gen(GenArgs),
    /// Run one solve from a random initial guess.
    Decompose(DecomposeArgs),
    /// Run a multi-start experiment described by a config file.
    Sweep(SweepArgs),
    /// Compute metrics for a finished run directory.
    Report(ReportArgs),
    /// Rewrite a tensor or model file, optionally as JSON.
    Convert(ConvertArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Dimensions, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub shape: Vec<usize>,
    #[arg(long)]
    pub rank: usize,
    /// Target fraction of nonzero entries.
    #[arg(long)]
    pub density: f64,
    /// Output FROSTT file.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write the generating model here.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub tensor: PathBuf,
    #[arg(long)]
    pub rank: usize,
    /// cpapr, gcp or cgc.
    #[arg(long, default_value = "cpapr")]
    pub method: String,
    /// Start index; the initial guess matches start `n` of a multi-start run
    /// with the same seed.
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    /// CPAPR-MU outer iterations.
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub kkt_tol: f64,
    /// GCP-Adam epochs.
    #[arg(long, default_value_t = 10_000)]
    pub epochs: usize,
    /// Hybrid: stochastic epochs per cycle.
    #[arg(long, default_value_t = 50)]
    pub j: usize,
    /// Hybrid: deterministic iterations per cycle.
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub cycles: usize,
    /// Use an unscaled guess instead of one summing to the data total.
    #[arg(long)]
    pub unscaled_guess: bool,
    /// Output model file.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Write the solver trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// TOML experiment config.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Run directory; defaults to the config's `output_dir`, then to
    /// `$CGC_OUTPUT_DIR/<config name>`, then to `cgc-runs/<config name>`.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub baseline_starts: Option<usize>,
    /// Skip writing the report.
    #[arg(long)]
    pub no_report: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory written by `sweep`.
    pub run_dir: PathBuf,
    /// Report directory; defaults to `<run_dir>/report`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    #[arg(long)]
    pub t_step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// `.tns` tensor or `.model` model.
    pub input: PathBuf,
    /// `.tns`, `.model` or `.json`.
    pub output: PathBuf,
}
