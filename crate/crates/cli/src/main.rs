//! `mepoly`: fit, train, sample and export polynomial MaxEnt distributions.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::CliError;

#[derive(Debug, Parser)]
#[command(name = "mepoly", version, about, propagate_version = true)]
struct Cli {
    /// TOML file with per-subcommand defaults (`[fit]`, `[bandit]`, ...);
    /// command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit λ to a manifold's Boltzmann target or to a sample file.
    Fit(FitArgs),
    /// Train a single-state MaxEnt policy on a manifold reward.
    Bandit(BanditArgs),
    /// Train a PPO navigation policy in Smooth World.
    Navigate(NavigateArgs),
    /// Draw samples from a λ checkpoint.
    Sample(SampleArgs),
    /// Export the density of a 1D/2D λ checkpoint.
    Density(DensityArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every random draw of the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Target manifold: two_moons or lemniscate.
    #[arg(long, conflicts_with = "samples")]
    pub manifold: Option<String>,
    /// CSV of points (header row; `log_prob`/`index` columns are ignored).
    #[arg(long, value_name = "FILE")]
    pub samples: Option<PathBuf>,
    /// Basis order K.
    #[arg(long)]
    pub order: Option<usize>,
    /// Comma-separated orders for a convergence sweep, e.g. 2,4,6,8.
    #[arg(long, value_delimiter = ',')]
    pub orders: Option<Vec<usize>>,
    /// Quadrature nodes per axis.
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Temperature of the Boltzmann target.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Feature kind: legendre or monomial.
    #[arg(long)]
    pub kind: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct BanditArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub manifold: Option<String>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Entropy temperature α.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of update steps.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct NavigateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Built-in layout name (two_goals, slit_wall, obstacle_detour) or a TOML file.
    #[arg(long)]
    pub layout: Option<String>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Entropy bonus β.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Total environment steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Evaluation episodes after training.
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub jitter: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    /// λ checkpoint written by `fit` or `bandit`.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Number of samples.
    #[arg(short = 'n', long = "num-samples")]
    pub n: Option<usize>,
    #[arg(long)]
    pub jitter: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("MEPOLY_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("MEPOLY_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure {threads} threads: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let file = config::ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Fit(args) => commands::fit(&config::resolve_fit(&file, &args)?),
        Command::Bandit(args) => commands::bandit(&config::resolve_bandit(&file, &args)?),
        Command::Navigate(args) => commands::navigate(&config::resolve_navigate(&file, &args)?),
        Command::Sample(args) => commands::sample(&config::resolve_sample(&file, &args)?),
        Command::Density(args) => commands::density(&config::resolve_density(&file, &args)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("mepoly: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
