//! Exact-entropy MaxEnt ascent for the single-state bandit.
//!
//! The policy is the distribution itself with directly learnable `λ`. The
//! reward gradient is a score-function estimate with a batch-mean baseline;
//! the entropy gradient `−Cov(T)·λ` is exact on the grid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::{mass_kl, GridEval, NaturalParams, PolyDistribution};
use crate::env::{moon_distance, BanditEnv};
use crate::error::{Error, Result};
use crate::fit::{boltzmann_target, natural_direction, GridDensity, DEFAULT_FIT_LAMBDA_CLIP};
use crate::quadrature::ProductGrid;

pub const DEFAULT_BANDIT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BanditMethod {
    /// `λ += lr · g`.
    Gradient,
    /// `λ += lr · Cov(T)⁻¹ g`, with the exact grid Fisher information.
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditConfig {
    /// Entropy temperature.
    pub alpha: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub method: BanditMethod,
    pub lambda_clip: f64,
    /// Trust region for the natural method: a step is halved until both grid
    /// divergences `KL(π_old ‖ π_new)` and `KL(π_new ‖ π_old)` are at most this.
    pub max_kl: f64,
    /// Levenberg damping of the Fisher matrix, relative to its largest
    /// diagonal entry; keeps sampling noise in rarely visited directions from
    /// being amplified by near-zero eigenvalues.
    pub damping: f64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_BANDIT_ALPHA,
            learning_rate: 2.0,
            batch_size: 1024,
            iterations: 300,
            method: BanditMethod::Natural,
            lambda_clip: DEFAULT_FIT_LAMBDA_CLIP,
            max_kl: 0.02,
            damping: 1e-8,
        }
    }
}

impl BanditConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if !(self.max_kl > 0.0) {
            return Err(Error::InvalidArgument("max_kl must be positive".into()));
        }
        if !(self.lambda_clip > 0.0) {
            return Err(Error::InvalidArgument("lambda_clip must be positive".into()));
        }
        Ok(())
    }
}

/// Score-function estimate of `∇λ E[r]`.
///
/// With the batch-mean baseline `r̄`, `E[Σ (r_i − r̄)(T(a_i) − μ)] =
/// (B − 1)·Cov(T, r)`, so the sum is divided by `B − 1` rather than `B` to
/// keep the estimate unbiased. A single-sample batch carries no signal.
pub fn reward_gradient(eval: &GridEval<'_>, batch: &[(Vec<f64>, f64)]) -> Result<Vec<f64>> {
    let m = eval.expected_features().len();
    let mut grad = vec![0.0; m];
    if batch.len() < 2 {
        return Ok(grad);
    }
    let baseline = batch.iter().map(|(_, r)| r).sum::<f64>() / batch.len() as f64;
    let mu = eval.expected_features();
    for (action, reward) in batch {
        let t = eval.distribution().features(action)?;
        let adv = reward - baseline;
        for ((g, ti), mi) in grad.iter_mut().zip(&t).zip(&mu) {
            *g += adv * (ti - mi);
        }
    }
    let scale = 1.0 / (batch.len() - 1) as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(grad)
}

/// Exact `∇λ E[r] = Cov(T, r)` for a reward tabulated on the grid.
pub fn exact_reward_gradient(eval: &GridEval<'_>, rewards: &[f64]) -> Result<Vec<f64>> {
    let masses = eval.masses();
    if rewards.len() != masses.len() {
        return Err(Error::DimensionMismatch {
            expected: masses.len(),
            actual: rewards.len(),
        });
    }
    let mean: f64 = masses.iter().zip(rewards).map(|(m, r)| m * r).sum();
    let centred: Vec<f64> = masses.iter().zip(rewards).map(|(m, r)| m * (r - mean)).collect();
    let mut grad = vec![0.0; eval.expected_features().len()];
    eval.distribution().table().weighted_column_sums(&centred, &mut grad);
    Ok(grad)
}

/// One ascent step on `E[r] + α·H` from a batch of `(action, reward)` pairs.
pub fn bandit_maxent_update(
    dist: &PolyDistribution,
    params: &NaturalParams,
    batch: &[(Vec<f64>, f64)],
    config: &BanditConfig,
) -> Result<NaturalParams> {
    config.validate()?;
    let eval = dist.eval(params)?;
    let mut grad = reward_gradient(&eval, batch)?;
    if config.alpha > 0.0 {
        for (g, h) in grad.iter_mut().zip(eval.entropy_gradient()) {
            *g += config.alpha * h;
        }
    }
    grad[0] = 0.0;
    let advance = |step: f64, direction: &[f64]| -> Result<NaturalParams> {
        let raw: Vec<f64> = params
            .as_slice()
            .iter()
            .zip(direction)
            .map(|(l, d)| l + step * d)
            .collect();
        NaturalParams::clipped(&raw, config.lambda_clip)
    };
    match config.method {
        BanditMethod::Gradient => advance(config.learning_rate, &grad),
        BanditMethod::Natural => {
            let Some(direction) = natural_direction(&eval.covariance(), &grad, config.damping) else {
                return advance(config.learning_rate, &grad);
            };
            // Cov(T)⁻¹ amplifies noise along directions the policy barely
            // visits, where a quadratic KL estimate is useless; the exact
            // grid KL is cheap, so backtrack on it instead. Both directions
            // are bounded: KL(old‖new) alone lets a step pour mass into
            // regions the old policy never sampled.
            let mut step = config.learning_rate;
            for _ in 0..MAX_BACKTRACKS {
                let next = advance(step, &direction)?;
                let next_eval = dist.eval(&next)?;
                let moved = eval.kl_to(&next_eval).max(next_eval.kl_to(&eval));
                if moved <= config.max_kl {
                    return Ok(next);
                }
                step *= 0.5;
            }
            Ok(params.clone())
        }
    }
}

const MAX_BACKTRACKS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditRecord {
    pub iteration: usize,
    /// Batch mean reward.
    pub mean_reward: f64,
    /// Exact `E_π[r]` on the grid.
    pub expected_reward: f64,
    pub entropy: f64,
    /// `E_π[r] + α·H(π)`.
    pub objective: f64,
    /// `KL(π ‖ π*)` to the Boltzmann target, the gap the objective closes.
    pub kl_to_target: f64,
}

#[derive(Debug, Clone)]
pub struct BanditRun {
    pub params: NaturalParams,
    pub history: Vec<BanditRecord>,
    pub target: GridDensity,
}

fn record(
    iteration: usize,
    eval: &GridEval<'_>,
    rewards: &[f64],
    target: &GridDensity,
    alpha: f64,
    mean_reward: f64,
) -> Result<BanditRecord> {
    let expected_reward: f64 = eval.masses().iter().zip(rewards).map(|(m, r)| m * r).sum();
    let entropy = eval.entropy();
    Ok(BanditRecord {
        iteration,
        mean_reward,
        expected_reward,
        entropy,
        objective: expected_reward + alpha * entropy,
        kl_to_target: mass_kl(eval.masses(), target.masses())?,
    })
}

/// Train from the uniform policy, drawing `batch_size` grid actions per step.
pub fn train_bandit<R: Rng + ?Sized>(
    env: &BanditEnv,
    dist: &PolyDistribution,
    config: &BanditConfig,
    rng: &mut R,
) -> Result<BanditRun> {
    config.validate()?;
    if dist.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: dist.dim(),
        });
    }
    let grid = dist.grid();
    let rewards: Vec<f64> = grid.points().map(|p| env.step(p)).collect();
    let target = boltzmann_target(|p| env.step(p), grid, config.alpha.max(f64::MIN_POSITIVE))?;
    let mut params = NaturalParams::clipped(&vec![0.0; dist.num_features()], config.lambda_clip)?;
    let mut history = Vec::with_capacity(config.iterations + 1);

    for iteration in 0..config.iterations {
        let eval = dist.eval(&params)?;
        let sampler = eval.sampler();
        let batch: Vec<(Vec<f64>, f64)> = (0..config.batch_size)
            .map(|_| {
                let s = sampler.sample(rng, false);
                let r = rewards[s.index];
                (s.action, r)
            })
            .collect();
        let mean_reward = batch.iter().map(|(_, r)| r).sum::<f64>() / batch.len() as f64;
        history.push(record(iteration, &eval, &rewards, &target, config.alpha, mean_reward)?);
        params = bandit_maxent_update(dist, &params, &batch, config)?;
    }
    let eval = dist.eval(&params)?;
    let mean_reward: f64 = eval.masses().iter().zip(&rewards).map(|(m, r)| m * r).sum();
    history.push(record(config.iterations, &eval, &rewards, &target, config.alpha, mean_reward)?);
    Ok(BanditRun {
        params,
        history,
        target,
    })
}

/// Grid mass within `radius` of each of the two moons.
pub fn moon_coverage(grid: &ProductGrid, masses: &[f64], radius: f64) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (p, m) in grid.points().zip(masses) {
        for (moon, o) in out.iter_mut().enumerate() {
            if moon_distance(p, moon) <= radius {
                *o += m;
            }
        }
    }
    out
}
