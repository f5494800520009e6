mod commands;
mod series;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "popdyn", version, about = "Simulation-based inference for population dynamics models")]
pub struct Cli {
    /// Root seed; required by every stochastic command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON configuration (experiment and mcmc).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Ricker,
    Vole,
    Lgssm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Slmh,
    Pmmh,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a series and write it as CSV.
    Simulate(SimulateArgs),
    /// Compute the summary statistics of a series.
    Summarize(SummarizeArgs),
    /// Evaluate the synthetic log-likelihood at one parameter value.
    SlEval(SlEvalArgs),
    /// Estimate the log-likelihood with the particle filter.
    PfEval(PfEvalArgs),
    /// Fit the vole model to a series by SLMH and/or PMMH.
    Mcmc(McmcArgs),
    /// Run SMC-ABC on the Ricker model.
    Abc(AbcArgs),
    /// Run a configured experiment, a named preset, or a manifest again.
    Experiment(ExperimentArgs),
    /// Normality and Lyapunov diagnostics.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    /// Parameter overrides, e.g. `r=4.5,e=0.8`.
    #[arg(long, default_value = "")]
    pub params: String,
    /// Number of observations (default 50, or 90 for the vole model).
    #[arg(long)]
    pub t_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    /// Series CSV: `year,season,index` or a table with an `obs` column.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct SlEvalArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "")]
    pub params: String,
    /// Simulations used for the mean and covariance.
    #[arg(long, default_value_t = 1000)]
    pub m: usize,
    /// Off-diagonal shrinkage weight in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    pub shrinkage: f64,
}

#[derive(Debug, Args)]
pub struct PfEvalArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "")]
    pub params: String,
    /// Total particles, split evenly over the replicates.
    #[arg(long, default_value_t = 1000)]
    pub particles: usize,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
}

#[derive(Debug, Args)]
pub struct McmcArgs {
    /// Series CSV (`year,season,index`); overrides the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Simulations per SL evaluation or particles per filter.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Statistics simulated for the normality check (0 skips it).
    #[arg(long)]
    pub normality_sims: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AbcArgs {
    /// Ricker series CSV with an `obs` column.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub n_pop: usize,
    /// Stop once a round accepts less than this fraction.
    #[arg(long, default_value_t = 0.01)]
    pub stop: f64,
    #[arg(long, default_value_t = 100)]
    pub max_rounds: usize,
    /// Parameters at which the scaling covariance is estimated (default: prior means).
    #[arg(long, default_value = "")]
    pub scaling_at: String,
    #[arg(long, default_value_t = 1000)]
    pub cov_sims: usize,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment kind to run from a preset instead of `--config`.
    #[arg(long, conflicts_with = "rerun")]
    pub kind: Option<String>,
    #[arg(long, default_value = "desk")]
    pub preset: String,
    /// Manifest of an earlier run to reproduce.
    #[arg(long)]
    pub rerun: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(subcommand)]
    pub kind: DiagnoseKind,
}

#[derive(Debug, Subcommand)]
pub enum DiagnoseKind {
    /// Multivariate normality of the vole statistics at one parameter value.
    Normality {
        /// Vole series (`year,season,index`).
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "")]
        params: String,
        #[arg(long, default_value_t = 10_000)]
        m: usize,
    },
    /// Maximal Lyapunov exponents of the vole skeleton.
    Lyapunov {
        /// Chain CSV; without it `--params` is used for every draw.
        #[arg(long)]
        chain: Option<PathBuf>,
        /// Rows of this method when the chain file holds several.
        #[arg(long)]
        method: Option<String>,
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
        #[arg(long, default_value = "")]
        params: String,
        #[arg(long, default_value_t = 50)]
        draws: usize,
        #[arg(long, default_value_t = 12_000)]
        transient: usize,
        #[arg(long, default_value_t = 2_400)]
        horizon: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
