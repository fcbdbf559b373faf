//! Trainers: direct-`λ` MaxEnt ascent for the bandit, PPO for Smooth World.

pub mod bandit;
pub mod ppo;

pub use bandit::{
    bandit_maxent_update, exact_reward_gradient, moon_coverage, reward_gradient, train_bandit,
    BanditConfig, BanditMethod, BanditRecord, BanditRun, DEFAULT_BANDIT_ALPHA,
};
pub use ppo::{
    collect_rollouts, compute_gae, evaluate, ppo_update, surrogate_gradient, train_ppo,
    EpisodeCursor, EpisodeSummary, EvalMetrics, Evaluation, PolyPolicy, PpoConfig, PpoOptimizers,
    PpoReport, RolloutBuffer, StepRecord, UpdateLog,
};
