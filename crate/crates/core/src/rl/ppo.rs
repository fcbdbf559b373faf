//! PPO with a clipped surrogate and an exact entropy bonus.
//!
//! The policy network maps a state to raw natural parameters, which are
//! clipped and handed to a shared [`PolyDistribution`]. Log-probabilities,
//! their gradients `T(a) − E[T]` and the entropy gradient `−Cov(T)·λ` are all
//! exact with respect to the quadrature grid.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::{NaturalParams, PolyDistribution};
use crate::env::{SmoothWorld, TerminalCause, Transition, WorldState};
use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp, DEFAULT_HIDDEN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    /// Surrogate clip `ε`.
    pub clip_eps: f64,
    /// Entropy bonus `β`.
    pub entropy_coef: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    /// Environment steps collected per update.
    pub steps_per_update: usize,
    pub total_steps: usize,
    /// Move sampled actions uniformly within their quadrature cell.
    pub jitter: bool,
    /// Standardize advantages per batch (zero mean, unit variance).
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            entropy_coef: 0.01,
            gamma: 0.99,
            gae_lambda: 0.95,
            policy_lr: 3e-4,
            value_lr: 1e-3,
            epochs: 4,
            minibatch_size: 256,
            steps_per_update: 2048,
            total_steps: 200_000,
            jitter: false,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.gae_lambda >= 0.0 && self.gae_lambda <= 1.0) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.entropy_coef >= 0.0) {
            return bad("entropy_coef must be >= 0");
        }
        if !(self.policy_lr > 0.0 && self.value_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.steps_per_update == 0 {
            return bad("epochs, minibatch_size and steps_per_update must be positive");
        }
        Ok(())
    }
}

/// State-conditioned polynomial policy: `λ(s) = clip(net(s))`.
#[derive(Debug, Clone)]
pub struct PolyPolicy {
    pub net: Mlp,
    pub dist: PolyDistribution,
}

impl PolyPolicy {
    /// Network `[state_dim, hidden.., M]` with a zeroed output layer, so the
    /// initial policy is uniform in every state.
    pub fn new<R: Rng + ?Sized>(
        dist: PolyDistribution,
        state_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(dist.num_features());
        let net = Mlp::new(&sizes, true, rng)?;
        Ok(Self { net, dist })
    }

    pub fn with_default_hidden<R: Rng + ?Sized>(dist: PolyDistribution, rng: &mut R) -> Result<Self> {
        Self::new(dist, 2, &DEFAULT_HIDDEN, rng)
    }

    pub fn from_net(net: Mlp, dist: PolyDistribution) -> Result<Self> {
        if net.output_size() != dist.num_features() {
            return Err(Error::DimensionMismatch {
                expected: dist.num_features(),
                actual: net.output_size(),
            });
        }
        Ok(Self { net, dist })
    }

    pub fn params(&self, state: &[f64]) -> Result<NaturalParams> {
        self.dist.clip_params(&self.net.forward(state)?)
    }

    /// Draw an action; returns it with `log π(a|s)`.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], jitter: bool, rng: &mut R) -> Result<([f64; 2], f64)> {
        let params = self.params(state)?;
        let eval = self.dist.eval(&params)?;
        let sample = eval.sampler().sample(rng, jitter);
        let action = [sample.action[0], sample.action[1]];
        let log_prob = if jitter { eval.log_prob(&action)? } else { sample.log_prob };
        Ok((action, log_prob))
    }

    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        self.dist.log_prob(&self.params(state)?, action)
    }

    pub fn entropy(&self, state: &[f64]) -> Result<f64> {
        self.dist.entropy(&self.params(state)?)
    }

    /// `log π(a|s)` and its gradient with respect to the network parameters.
    /// Coordinates held at the clip bound pass no gradient.
    pub fn log_prob_grad(&self, state: &[f64], action: &[f64]) -> Result<(f64, Vec<f64>)> {
        let cache = self.net.forward_cached(state)?;
        let raw = cache.output();
        let params = self.dist.clip_params(raw)?;
        let eval = self.dist.eval(&params)?;
        let t = self.dist.features(action)?;
        let mu = eval.expected_features();
        let mask = NaturalParams::pass_through_mask(raw, self.dist.lambda_clip());
        let upstream: Vec<f64> = t
            .iter()
            .zip(&mu)
            .zip(&mask)
            .map(|((ti, mi), &pass)| if pass { ti - mi } else { 0.0 })
            .collect();
        let mut grads = self.net.zero_grads();
        self.net.backward(&cache, &upstream, &mut grads)?;
        Ok((eval.log_prob_features(&t), grads))
    }
}

/// One environment step as seen by the learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: usize,
    pub t: usize,
    pub state: [f64; 2],
    pub action: [f64; 2],
    /// `log π(a|s)` under the behaviour policy.
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
    pub cause: TerminalCause,
    pub next_state: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub total_reward: f64,
    pub length: usize,
    pub cause: TerminalCause,
    pub goal: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub records: Vec<StepRecord>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// `V(s')` for the state after the last record; used only when that
    /// record does not end its episode.
    pub bootstrap_value: f64,
    /// Episodes that finished inside this buffer.
    pub finished: Vec<EpisodeSummary>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Where collection resumes: an episode may span several buffers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeCursor {
    pub state: WorldState,
    pub episode: usize,
    pub episode_reward: f64,
}

impl EpisodeCursor {
    pub fn new(world: &SmoothWorld) -> Self {
        Self {
            state: world.reset(),
            episode: 0,
            episode_reward: 0.0,
        }
    }
}

fn scalar(value: &Mlp, state: &[f64]) -> Result<f64> {
    Ok(value.forward(state)?[0])
}

/// Run the policy for `n_steps`, resetting the world after every terminal.
pub fn collect_rollouts<R: Rng + ?Sized>(
    world: &SmoothWorld,
    policy: &PolyPolicy,
    value: &Mlp,
    n_steps: usize,
    jitter: bool,
    cursor: &mut EpisodeCursor,
    rng: &mut R,
) -> Result<RolloutBuffer> {
    let mut buffer = RolloutBuffer {
        records: Vec::with_capacity(n_steps),
        ..RolloutBuffer::default()
    };
    for _ in 0..n_steps {
        let state = cursor.state;
        let (action, log_prob) = policy.act(&state.pos, jitter, rng)?;
        let v = scalar(value, &state.pos)?;
        let (next, tr) = world.step(&state, action);
        cursor.episode_reward += tr.reward;
        buffer.records.push(StepRecord {
            episode: cursor.episode,
            t: state.t,
            state: state.pos,
            action,
            log_prob,
            reward: tr.reward,
            value: v,
            done: tr.done,
            cause: tr.cause,
            next_state: tr.next_state,
        });
        if tr.done {
            buffer.finished.push(EpisodeSummary {
                episode: cursor.episode,
                total_reward: cursor.episode_reward,
                length: next.t,
                cause: tr.cause,
                goal: tr.goal,
            });
            cursor.episode += 1;
            cursor.episode_reward = 0.0;
            cursor.state = world.reset();
        } else {
            cursor.state = next;
        }
    }
    buffer.bootstrap_value = match buffer.records.last() {
        Some(last) if !last.done => scalar(value, &cursor.state.pos)?,
        _ => 0.0,
    };
    Ok(buffer)
}

/// Generalized advantage estimation. Every terminal, timeouts included,
/// cuts the recursion; returns are `advantage + value`.
pub fn compute_gae(buffer: &mut RolloutBuffer, gamma: f64, gae_lambda: f64) {
    let n = buffer.records.len();
    buffer.advantages = vec![0.0; n];
    buffer.returns = vec![0.0; n];
    let mut next_value = buffer.bootstrap_value;
    let mut running = 0.0;
    for i in (0..n).rev() {
        let rec = &buffer.records[i];
        let live = if rec.done { 0.0 } else { 1.0 };
        let delta = rec.reward + gamma * next_value * live - rec.value;
        running = delta + gamma * gae_lambda * live * running;
        buffer.advantages[i] = running;
        buffer.returns[i] = running + rec.value;
        next_value = rec.value;
    }
}

/// Clipped surrogate `min(rA, clip(r, 1−ε, 1+ε)A)` for one sample and its
/// gradient with respect to `λ`, given `∂ log π/∂λ = score`.
pub fn surrogate_gradient(
    log_prob: f64,
    old_log_prob: f64,
    advantage: f64,
    clip_eps: f64,
    score: &[f64],
) -> (f64, Vec<f64>) {
    let ratio = (log_prob - old_log_prob).exp();
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * advantage;
    if unclipped <= clipped {
        (unclipped, score.iter().map(|s| unclipped * s).collect())
    } else {
        (clipped, vec![0.0; score.len()])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoReport {
    /// `−(L^CLIP + β·H)` per minibatch, in order.
    pub policy_losses: Vec<f64>,
    /// Mean `½(V − R)²` per minibatch.
    pub value_losses: Vec<f64>,
    /// Mean exact entropy per minibatch.
    pub entropies: Vec<f64>,
    /// Mean `log π_old − log π` over the final epoch.
    pub approx_kl: f64,
    /// Share of final-epoch samples on the clipped branch.
    pub clip_fraction: f64,
}

/// Accumulated per-chunk quantities of one minibatch.
#[derive(Debug, Clone)]
struct ChunkGrad {
    policy: Vec<f64>,
    value: Vec<f64>,
    surrogate: f64,
    entropy: f64,
    value_loss: f64,
    kl: f64,
    clipped: usize,
}

impl ChunkGrad {
    fn zeros(policy_len: usize, value_len: usize) -> Self {
        Self {
            policy: vec![0.0; policy_len],
            value: vec![0.0; value_len],
            surrogate: 0.0,
            entropy: 0.0,
            value_loss: 0.0,
            kl: 0.0,
            clipped: 0,
        }
    }

    fn add(&mut self, other: &ChunkGrad) {
        for (a, b) in self.policy.iter_mut().zip(&other.policy) {
            *a += b;
        }
        for (a, b) in self.value.iter_mut().zip(&other.value) {
            *a += b;
        }
        self.surrogate += other.surrogate;
        self.entropy += other.entropy;
        self.value_loss += other.value_loss;
        self.kl += other.kl;
        self.clipped += other.clipped;
    }
}

/// Samples per gradient chunk; chunks are reduced in index order so results
/// do not depend on the thread count.
const CHUNK: usize = 16;

struct Minibatch<'a> {
    policy: &'a PolyPolicy,
    value: &'a Mlp,
    buffer: &'a RolloutBuffer,
    advantages: &'a [f64],
    config: &'a PpoConfig,
    scale: f64,
}

impl Minibatch<'_> {
    fn chunk(&self, indices: &[usize]) -> Result<ChunkGrad> {
        let net = &self.policy.net;
        let dist = &self.policy.dist;
        let clip = dist.lambda_clip();
        let mut out = ChunkGrad::zeros(net.num_params(), self.value.num_params());
        for &i in indices {
            let rec = &self.buffer.records[i];
            let cache = net.forward_cached(&rec.state)?;
            let raw = cache.output();
            let params = dist.clip_params(raw)?;
            let eval = dist.eval(&params)?;
            let t = dist.features(&rec.action)?;
            let log_prob = eval.log_prob_features(&t);
            let mu = eval.expected_features();
            let score: Vec<f64> = t.iter().zip(&mu).map(|(a, b)| a - b).collect();
            let (surrogate, surrogate_grad) = surrogate_gradient(
                log_prob,
                rec.log_prob,
                self.advantages[i],
                self.config.clip_eps,
                &score,
            );
            let beta = self.config.entropy_coef;
            let entropy_grad = eval.entropy_gradient();
            let mask = NaturalParams::pass_through_mask(raw, clip);
            // Gradient of the loss −(L^CLIP + β·H), averaged over the minibatch.
            let upstream: Vec<f64> = surrogate_grad
                .iter()
                .zip(&entropy_grad)
                .zip(&mask)
                .map(|((s, h), &pass)| if pass { -self.scale * (s + beta * h) } else { 0.0 })
                .collect();
            net.backward(&cache, &upstream, &mut out.policy)?;

            let vcache = self.value.forward_cached(&rec.state)?;
            let err = vcache.output()[0] - self.buffer.returns[i];
            self.value.backward(&vcache, &[self.scale * err], &mut out.value)?;

            out.surrogate += surrogate;
            out.entropy += eval.entropy();
            out.value_loss += 0.5 * err * err;
            out.kl += rec.log_prob - log_prob;
            let ratio = (log_prob - rec.log_prob).exp();
            if (ratio - 1.0).abs() > self.config.clip_eps {
                out.clipped += 1;
            }
        }
        Ok(out)
    }

    fn gradients(&self, indices: &[usize]) -> Result<ChunkGrad> {
        let chunks: Vec<&[usize]> = indices.chunks(CHUNK).collect();
        #[cfg(feature = "parallel")]
        let parts: Vec<Result<ChunkGrad>> = {
            use rayon::prelude::*;
            chunks.par_iter().map(|c| self.chunk(c)).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let parts: Vec<Result<ChunkGrad>> = chunks.iter().map(|c| self.chunk(c)).collect();
        let mut total = ChunkGrad::zeros(self.policy.net.num_params(), self.value.num_params());
        for part in parts {
            total.add(&part?);
        }
        Ok(total)
    }
}

/// Optimizer state of one learner.
#[derive(Debug, Clone)]
pub struct PpoOptimizers {
    pub policy: Adam,
    pub value: Adam,
}

impl PpoOptimizers {
    pub fn new(policy: &PolyPolicy, value: &Mlp, config: &PpoConfig) -> Self {
        Self {
            policy: Adam::new(policy.net.num_params(), config.policy_lr),
            value: Adam::new(value.num_params(), config.value_lr),
        }
    }
}

fn normalized(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    values.iter().map(|v| (v - mean) / (std + 1e-8)).collect()
}

/// Several epochs of minibatch ascent on `L^CLIP + β·H` and descent on the
/// value error. A non-finite loss restores the networks and optimizers to
/// their state on entry and reports [`Error::Diverged`].
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut PolyPolicy,
    value: &mut Mlp,
    optimizers: &mut PpoOptimizers,
    buffer: &RolloutBuffer,
    config: &PpoConfig,
    rng: &mut R,
) -> Result<PpoReport> {
    config.validate()?;
    if buffer.is_empty() {
        return Err(Error::Empty("rollout buffer"));
    }
    if buffer.advantages.len() != buffer.len() || buffer.returns.len() != buffer.len() {
        return Err(Error::InvalidArgument("advantages not computed for this buffer".into()));
    }
    let saved = (policy.net.clone(), value.clone(), optimizers.clone());
    match run_epochs(policy, value, optimizers, buffer, config, rng) {
        Ok(report) => Ok(report),
        Err(err) => {
            policy.net = saved.0;
            *value = saved.1;
            *optimizers = saved.2;
            Err(err)
        }
    }
}

fn run_epochs<R: Rng + ?Sized>(
    policy: &mut PolyPolicy,
    value: &mut Mlp,
    optimizers: &mut PpoOptimizers,
    buffer: &RolloutBuffer,
    config: &PpoConfig,
    rng: &mut R,
) -> Result<PpoReport> {
    let advantages = if config.normalize_advantages {
        normalized(&buffer.advantages)
    } else {
        buffer.advantages.clone()
    };
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let mut report = PpoReport::default();
    let mut iteration = 0;
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let (mut kl, mut clipped) = (0.0, 0);
        for indices in order.chunks(config.minibatch_size) {
            iteration += 1;
            let n = indices.len() as f64;
            let grads = Minibatch {
                policy,
                value,
                buffer,
                advantages: &advantages,
                config,
                scale: 1.0 / n,
            }
            .gradients(indices)?;
            let policy_loss = -(grads.surrogate + config.entropy_coef * grads.entropy) / n;
            let value_loss = grads.value_loss / n;
            if !policy_loss.is_finite() || !value_loss.is_finite() {
                return Err(Error::Diverged {
                    iteration,
                    reason: format!("policy loss {policy_loss}, value loss {value_loss}"),
                });
            }
            optimizers.policy.step(policy.net.params_mut(), &grads.policy);
            optimizers.value.step(value.params_mut(), &grads.value);
            report.policy_losses.push(policy_loss);
            report.value_losses.push(value_loss);
            report.entropies.push(grads.entropy / n);
            if epoch + 1 == config.epochs {
                kl += grads.kl;
                clipped += grads.clipped;
            }
        }
        if epoch + 1 == config.epochs {
            report.approx_kl = kl / buffer.len() as f64;
            report.clip_fraction = clipped as f64 / buffer.len() as f64;
        }
    }
    if policy.net.params().iter().chain(value.params()).any(|p| !p.is_finite()) {
        return Err(Error::Diverged {
            iteration,
            reason: "non-finite network parameters".into(),
        });
    }
    Ok(report)
}

/// One row of the per-update training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateLog {
    pub update: usize,
    pub steps: usize,
    pub episodes: usize,
    pub mean_episode_reward: f64,
    pub success_rate: f64,
    /// Finished episodes per goal region.
    pub goal_counts: Vec<usize>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Alternate collection and updates until `total_steps` have been taken.
/// `on_update` sees every log row as it is produced.
#[allow(clippy::too_many_arguments)]
pub fn train_ppo<R: Rng + ?Sized, F: FnMut(&UpdateLog)>(
    world: &SmoothWorld,
    policy: &mut PolyPolicy,
    value: &mut Mlp,
    config: &PpoConfig,
    rng: &mut R,
    mut on_update: F,
) -> Result<Vec<UpdateLog>> {
    config.validate()?;
    world.validate()?;
    let mut optimizers = PpoOptimizers::new(policy, value, config);
    let mut cursor = EpisodeCursor::new(world);
    let mut logs = Vec::new();
    let mut steps = 0;
    while steps < config.total_steps {
        let n = config.steps_per_update.min(config.total_steps - steps);
        let mut buffer = collect_rollouts(world, policy, value, n, config.jitter, &mut cursor, rng)?;
        steps += n;
        compute_gae(&mut buffer, config.gamma, config.gae_lambda);
        let report = ppo_update(policy, value, &mut optimizers, &buffer, config, rng)?;
        let episodes = buffer.finished.len();
        let mean = |f: &dyn Fn(&EpisodeSummary) -> f64| {
            if episodes == 0 {
                0.0
            } else {
                buffer.finished.iter().map(f).sum::<f64>() / episodes as f64
            }
        };
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let mut goal_counts = vec![0; world.goals.len()];
        for g in buffer.finished.iter().filter_map(|e| e.goal) {
            goal_counts[g] += 1;
        }
        let log = UpdateLog {
            update: logs.len(),
            steps,
            episodes,
            mean_episode_reward: mean(&|e| e.total_reward),
            success_rate: mean(&|e| f64::from(u8::from(e.cause == TerminalCause::Goal))),
            goal_counts,
            policy_loss: avg(&report.policy_losses),
            value_loss: avg(&report.value_losses),
            entropy: avg(&report.entropies),
            approx_kl: report.approx_kl,
            clip_fraction: report.clip_fraction,
        };
        on_update(&log);
        logs.push(log);
    }
    Ok(logs)
}

/// Evaluation summary over whole episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub mean_return: f64,
    pub success_rate: f64,
    /// Episodes ending in each goal region, indexed like the layout's goals.
    pub goal_counts: Vec<usize>,
    pub deaths: usize,
    pub timeouts: usize,
    /// Final positions binned on a `bins × bins` grid over the box,
    /// row-major with row 0 at `y = −1`.
    pub terminal_histogram: Vec<usize>,
    pub bins: usize,
}

impl EvalMetrics {
    /// Number of goal regions reached at least once.
    pub fn distinct_goals(&self) -> usize {
        self.goal_counts.iter().filter(|&&c| c > 0).count()
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub metrics: EvalMetrics,
    pub trajectories: Vec<Vec<Transition>>,
}

pub const TERMINAL_BINS: usize = 8;

fn bin_of(x: f64, bins: usize) -> usize {
    (((x + 1.0) / 2.0 * bins as f64).floor() as usize).min(bins - 1)
}

/// Roll out `episodes` full episodes with the stochastic policy.
pub fn evaluate<R: Rng + ?Sized>(
    policy: &PolyPolicy,
    world: &SmoothWorld,
    episodes: usize,
    jitter: bool,
    rng: &mut R,
) -> Result<Evaluation> {
    let bins = TERMINAL_BINS;
    let mut metrics = EvalMetrics {
        episodes,
        mean_return: 0.0,
        success_rate: 0.0,
        goal_counts: vec![0; world.goals.len()],
        deaths: 0,
        timeouts: 0,
        terminal_histogram: vec![0; bins * bins],
        bins,
    };
    let mut trajectories = Vec::with_capacity(episodes);
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut state = world.reset();
        let mut path = Vec::new();
        loop {
            let (action, _) = policy.act(&state.pos, jitter, rng)?;
            let (next, tr) = world.step(&state, action);
            total += tr.reward;
            path.push(tr);
            state = next;
            if tr.done {
                match tr.cause {
                    TerminalCause::Goal => {
                        if let Some(g) = tr.goal {
                            metrics.goal_counts[g] += 1;
                        }
                    }
                    TerminalCause::Death => metrics.deaths += 1,
                    TerminalCause::Timeout => metrics.timeouts += 1,
                    TerminalCause::None => {}
                }
                let [x, y] = tr.next_state;
                metrics.terminal_histogram[bin_of(y, bins) * bins + bin_of(x, bins)] += 1;
                break;
            }
        }
        trajectories.push(path);
    }
    if episodes > 0 {
        metrics.mean_return = total / episodes as f64;
        metrics.success_rate = metrics.goal_counts.iter().sum::<usize>() as f64 / episodes as f64;
    }
    Ok(Evaluation {
        metrics,
        trajectories,
    })
}
