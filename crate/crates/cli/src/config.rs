//! Run configurations: built-in defaults, overridden by a TOML file section,
//! overridden by command-line flags. The resolved value is what a run uses
//! and what it records in `resolved-config.json`.

use std::path::{Path, PathBuf};

use mepoly::env::ManifoldKind;
use mepoly::fit::DEFAULT_FIT_LAMBDA_CLIP;
use mepoly::rl::BanditMethod;
use mepoly::FeatureKind;
use serde::{Deserialize, Serialize};

use crate::{BanditArgs, DensityArgs, FitArgs, NavigateArgs, SampleArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mepoly::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
}

impl CliError {
    /// 1 for numerical failures, 2 for usage and I/O problems.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(mepoly::Error::Diverged { .. })
            | CliError::Core(mepoly::Error::NonFiniteParameter { .. }) => 1,
            _ => 2,
        }
    }
}

/// Optional per-subcommand sections of the `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub fit: FitRun,
    pub bandit: BanditRun,
    pub navigate: NavigateRun,
    pub sample: SampleRun,
    pub density: DensityRun,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitRun {
    pub seed: u64,
    pub out: PathBuf,
    /// Boltzmann target on a manifold; used when `samples` is unset.
    pub manifold: ManifoldKind,
    pub samples: Option<PathBuf>,
    pub order: usize,
    /// Convergence sweep; the checkpoint is written for the last order.
    pub orders: Option<Vec<usize>>,
    pub grid_size: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub target_points: usize,
    pub kind: FeatureKind,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub lambda_clip: f64,
}

impl Default for FitRun {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out/fit"),
            manifold: ManifoldKind::TwoMoons,
            samples: None,
            order: 4,
            orders: None,
            grid_size: 64,
            alpha: 0.05,
            sigma: mepoly::env::DEFAULT_SIGMA,
            target_points: 1000,
            kind: FeatureKind::Legendre,
            max_iters: 500,
            grad_tol: 1e-8,
            lambda_clip: DEFAULT_FIT_LAMBDA_CLIP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditRun {
    pub seed: u64,
    pub out: PathBuf,
    pub manifold: ManifoldKind,
    pub order: usize,
    pub grid_size: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub target_points: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub method: BanditMethod,
    pub max_kl: f64,
    pub damping: f64,
    pub lambda_clip: f64,
}

impl Default for BanditRun {
    fn default() -> Self {
        let core = mepoly::rl::BanditConfig::default();
        Self {
            seed: 0,
            out: PathBuf::from("out/bandit"),
            manifold: ManifoldKind::TwoMoons,
            order: 8,
            grid_size: 64,
            alpha: core.alpha,
            sigma: mepoly::env::DEFAULT_SIGMA,
            target_points: 1000,
            steps: core.iterations,
            batch_size: core.batch_size,
            learning_rate: core.learning_rate,
            method: core.method,
            max_kl: core.max_kl,
            damping: core.damping,
            lambda_clip: core.lambda_clip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavigateRun {
    pub seed: u64,
    pub out: PathBuf,
    /// Built-in layout name or path to a layout TOML file.
    pub layout: String,
    pub order: usize,
    pub grid_size: usize,
    pub beta: f64,
    pub steps: usize,
    pub episodes: usize,
    pub jitter: bool,
    pub clip_eps: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub steps_per_update: usize,
    pub normalize_advantages: bool,
}

impl Default for NavigateRun {
    fn default() -> Self {
        let core = mepoly::rl::PpoConfig::default();
        Self {
            seed: 0,
            out: PathBuf::from("out/navigate"),
            layout: "two_goals".into(),
            order: 4,
            grid_size: 32,
            beta: 0.5,
            steps: 40_000,
            episodes: 100,
            jitter: core.jitter,
            clip_eps: core.clip_eps,
            gamma: core.gamma,
            gae_lambda: core.gae_lambda,
            policy_lr: core.policy_lr,
            value_lr: core.value_lr,
            epochs: core.epochs,
            minibatch_size: core.minibatch_size,
            steps_per_update: core.steps_per_update,
            normalize_advantages: core.normalize_advantages,
        }
    }
}

impl NavigateRun {
    pub fn ppo_config(&self) -> mepoly::rl::PpoConfig {
        mepoly::rl::PpoConfig {
            clip_eps: self.clip_eps,
            entropy_coef: self.beta,
            gamma: self.gamma,
            gae_lambda: self.gae_lambda,
            policy_lr: self.policy_lr,
            value_lr: self.value_lr,
            epochs: self.epochs,
            minibatch_size: self.minibatch_size,
            steps_per_update: self.steps_per_update,
            total_steps: self.steps,
            jitter: self.jitter,
            normalize_advantages: self.normalize_advantages,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleRun {
    pub seed: u64,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub n: usize,
    pub jitter: bool,
}

impl Default for SampleRun {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out/sample"),
            checkpoint: None,
            n: 10_000,
            jitter: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityRun {
    pub seed: u64,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
}

impl Default for DensityRun {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out/density"),
            checkpoint: None,
        }
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(value) = flag {
        *slot = value;
    }
}

fn parse<T: std::str::FromStr<Err = mepoly::Error>>(flag: Option<&String>) -> Result<Option<T>, CliError> {
    flag.map(|s| s.parse::<T>().map_err(|e| CliError::Usage(e.to_string())))
        .transpose()
}

pub fn resolve_fit(file: &ConfigFile, args: &FitArgs) -> Result<FitRun, CliError> {
    let mut run = file.fit.clone();
    set(&mut run.seed, args.common.seed);
    set(&mut run.out, args.common.out.clone());
    if let Some(manifold) = parse(args.manifold.as_ref())? {
        run.manifold = manifold;
        run.samples = None;
    }
    if args.samples.is_some() {
        run.samples = args.samples.clone();
    }
    set(&mut run.order, args.order);
    if args.orders.is_some() {
        run.orders = args.orders.clone();
    }
    set(&mut run.grid_size, args.grid_size);
    set(&mut run.alpha, args.alpha);
    set(&mut run.kind, parse(args.kind.as_ref())?);
    if let Some(orders) = &run.orders {
        if orders.is_empty() {
            return Err(CliError::Usage("--orders needs at least one order".into()));
        }
        if run.samples.is_some() {
            return Err(CliError::Usage(
                "--orders sweeps a manifold target; it cannot be combined with --samples".into(),
            ));
        }
    }
    Ok(run)
}

pub fn resolve_bandit(file: &ConfigFile, args: &BanditArgs) -> Result<BanditRun, CliError> {
    let mut run = file.bandit.clone();
    set(&mut run.seed, args.common.seed);
    set(&mut run.out, args.common.out.clone());
    set(&mut run.manifold, parse(args.manifold.as_ref())?);
    set(&mut run.order, args.order);
    set(&mut run.grid_size, args.grid_size);
    set(&mut run.alpha, args.alpha);
    set(&mut run.steps, args.steps);
    Ok(run)
}

pub fn resolve_navigate(file: &ConfigFile, args: &NavigateArgs) -> Result<NavigateRun, CliError> {
    let mut run = file.navigate.clone();
    set(&mut run.seed, args.common.seed);
    set(&mut run.out, args.common.out.clone());
    set(&mut run.layout, args.layout.clone());
    set(&mut run.order, args.order);
    set(&mut run.grid_size, args.grid_size);
    set(&mut run.beta, args.beta);
    set(&mut run.steps, args.steps);
    set(&mut run.episodes, args.episodes);
    run.jitter |= args.jitter;
    Ok(run)
}

pub fn resolve_sample(file: &ConfigFile, args: &SampleArgs) -> Result<SampleRun, CliError> {
    let mut run = file.sample.clone();
    set(&mut run.seed, args.common.seed);
    set(&mut run.out, args.common.out.clone());
    if args.checkpoint.is_some() {
        run.checkpoint = args.checkpoint.clone();
    }
    set(&mut run.n, args.n);
    run.jitter |= args.jitter;
    if run.checkpoint.is_none() {
        return Err(CliError::Usage("sample needs --checkpoint".into()));
    }
    Ok(run)
}

pub fn resolve_density(file: &ConfigFile, args: &DensityArgs) -> Result<DensityRun, CliError> {
    let mut run = file.density.clone();
    set(&mut run.seed, args.common.seed);
    set(&mut run.out, args.common.out.clone());
    if args.checkpoint.is_some() {
        run.checkpoint = args.checkpoint.clone();
    }
    if run.checkpoint.is_none() {
        return Err(CliError::Usage("density needs --checkpoint".into()));
    }
    Ok(run)
}
