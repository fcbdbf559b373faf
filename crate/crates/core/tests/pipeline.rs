//! End-to-end checks through the public API only: checkpoint → sampler →
//! refit, the bandit trainer, and policy rollouts in a Smooth World.

use mepoly::env::{builtin_layout, make_manifold, BanditEnv, ManifoldKind, DEFAULT_SIGMA};
use mepoly::fit::{fit_mle, FitConfig};
use mepoly::io::LambdaCheckpoint;
use mepoly::nn::Mlp;
use mepoly::rl::bandit::{train_bandit, BanditConfig};
use mepoly::rl::ppo::{evaluate, PolyPolicy};
use mepoly::{l1_distance, PolyDistribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn checkpoint_file_round_trip_then_sample_and_refit() {
    let dist = PolyDistribution::full(2, 3, 32).unwrap();
    let raw: Vec<f64> = (0..dist.num_features()).map(|i| 0.4 * ((i as f64).sin())).collect();
    let params = dist.clip_params(&raw).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lambda.bin");
    LambdaCheckpoint::new(&dist, &params).unwrap().save(&path).unwrap();
    let loaded = LambdaCheckpoint::load(&path).unwrap();
    let dist2 = loaded.distribution().unwrap();
    let params2 = loaded.params().unwrap();
    assert_eq!(params2.as_slice(), params.as_slice());

    let eval = dist2.eval(&params2).unwrap();
    let sampler = eval.sampler();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples: Vec<Vec<f64>> = (0..40_000).map(|_| sampler.sample(&mut rng, false).action).collect();
    let fit = fit_mle(&samples, &dist2, &FitConfig::default()).unwrap();
    assert!(fit.report.converged);

    let refit = dist2.eval(&fit.params).unwrap();
    let l1 = l1_distance(eval.masses(), refit.masses()).unwrap();
    assert!(l1 < 0.05, "L1 between source and refit = {l1}");
}

#[test]
fn short_bandit_run_moves_towards_the_boltzmann_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let points = make_manifold(ManifoldKind::TwoMoons, 500, &mut rng);
    let env = BanditEnv::new(points, DEFAULT_SIGMA, 0.05).unwrap();
    let dist = PolyDistribution::full(2, 6, 32).unwrap();
    let config = BanditConfig {
        alpha: 0.05,
        iterations: 40,
        batch_size: 512,
        ..BanditConfig::default()
    };
    let run = train_bandit(&env, &dist, &config, &mut rng).unwrap();
    assert_eq!(run.history.len(), 41);
    let first = run.history.first().unwrap();
    let last = run.history.last().unwrap();
    assert!(last.kl_to_target < 0.5 * first.kl_to_target, "{first:?} → {last:?}");
    assert!(run.params.as_slice().iter().all(|v| v.is_finite()));
}

#[test]
fn untrained_policy_is_uniform_and_rollouts_stay_in_the_box() {
    let world = builtin_layout("two_goals").unwrap();
    let dist = PolyDistribution::full(2, 4, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let policy = PolyPolicy::new(dist, 2, &[16, 16], &mut rng).unwrap();

    let uniform = (4.0f64).ln();
    assert!((policy.entropy(&[0.0, 0.0]).unwrap() - uniform).abs() < 1e-12);

    let eval = evaluate(&policy, &world, 5, true, &mut rng).unwrap();
    assert_eq!(eval.metrics.episodes, 5);
    assert_eq!(eval.trajectories.len(), 5);
    for step in eval.trajectories.iter().flatten() {
        for &c in step.next_state.iter().chain(&step.action) {
            assert!((-1.0..=1.0).contains(&c), "{step:?}");
        }
    }
    let ended: usize = eval.metrics.goal_counts.iter().sum::<usize>() + eval.metrics.deaths + eval.metrics.timeouts;
    assert_eq!(ended, 5);
}

#[test]
fn network_bytes_round_trip_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let net = Mlp::new(&[2, 8, 3], false, &mut rng).unwrap();
    let back = Mlp::from_bytes(&net.to_bytes()).unwrap();
    assert_eq!(back.sizes(), net.sizes());
    assert_eq!(back.params(), net.params());
    assert_eq!(back.forward(&[0.3, -0.2]).unwrap(), net.forward(&[0.3, -0.2]).unwrap());
    assert!(Mlp::from_bytes(&net.to_bytes()[..10]).is_err());
}
