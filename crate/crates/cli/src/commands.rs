//! Subcommand bodies. Each one creates its output directory, records the
//! resolved configuration there, and then writes its artifacts.

use std::path::{Path, PathBuf};

use mepoly::env::{builtin_layout, load_layout, make_manifold, BanditEnv, ManifoldKind, SmoothWorld};
use mepoly::fit::{boltzmann_target, convergence_sweep, fit_mle, fit_moments, FitConfig, FitReport};
use mepoly::io::{self, DensityDump, LambdaCheckpoint};
use mepoly::nn::Mlp;
use mepoly::rl::{evaluate, moon_coverage, train_ppo, BanditConfig, BanditRecord, EvalMetrics, PolyPolicy};
use mepoly::{l1_distance, product_grid, trapezoid_grid, ExponentSet, FeatureKind, NaturalParams, PolyDistribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{BanditRun, CliError, DensityRun, FitRun, NavigateRun, SampleRun};

type Result<T> = std::result::Result<T, CliError>;

fn prepare<T: Serialize>(out: &Path, command: &str, run: &T) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|source| mepoly::Error::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let record = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": run,
    });
    io::write_json(&out.join("resolved-config.json"), &record)?;
    Ok(())
}

fn distribution(dim: usize, order: usize, grid_size: usize, kind: FeatureKind) -> Result<PolyDistribution> {
    let grid = product_grid(&trapezoid_grid(grid_size)?, dim)?;
    Ok(PolyDistribution::with_kind(ExponentSet::new(dim, order)?, grid, kind)?)
}

fn write_density(out: &Path, dist: &PolyDistribution, params: &NaturalParams) -> Result<()> {
    if dist.dim() <= 2 {
        DensityDump::new(dist, params)?.write(&out.join("density.csv"), &out.join("density.pgm"))?;
    }
    Ok(())
}

fn manifold_env(kind: ManifoldKind, points: usize, sigma: f64, alpha: f64, rng: &mut ChaCha8Rng) -> Result<BanditEnv> {
    Ok(BanditEnv::new(make_manifold(kind, points, rng), sigma, alpha)?)
}

fn warn_unconverged(label: &str, report: &FitReport) {
    if !report.converged {
        eprintln!(
            "mepoly: warning: {label} stopped after {} iterations with gradient norm {:.3e}",
            report.iterations, report.grad_norm
        );
    }
}

#[derive(Serialize)]
struct FitSummary<'a> {
    source: String,
    dim: usize,
    order: usize,
    num_features: usize,
    grid_size: usize,
    kind: FeatureKind,
    /// Grid L1 distance and `KL(target ‖ fit)`; manifold targets only.
    l1: Option<f64>,
    kl: Option<f64>,
    moment_residual: f64,
    report: &'a FitReport,
}

pub fn fit(run: &FitRun) -> Result<()> {
    prepare(&run.out, "fit", run)?;
    let config = FitConfig {
        max_iters: run.max_iters,
        grad_tol: run.grad_tol,
        lambda_clip: run.lambda_clip,
        ..FitConfig::default()
    };

    if let Some(path) = &run.samples {
        let points = io::read_points(path)?;
        let dim = points[0].len();
        let dist = distribution(dim, run.order, run.grid_size, run.kind)?;
        let outcome = fit_mle(&points, &dist, &config)?;
        warn_unconverged("fit", &outcome.report);
        LambdaCheckpoint::new(&dist, &outcome.params)?.save(&run.out.join("lambda.bin"))?;
        let summary = FitSummary {
            source: path.display().to_string(),
            dim,
            order: run.order,
            num_features: dist.num_features(),
            grid_size: run.grid_size,
            kind: run.kind,
            l1: None,
            kl: None,
            moment_residual: outcome.report.moment_residual(),
            report: &outcome.report,
        };
        io::write_json(&run.out.join("fit_report.json"), &summary)?;
        return write_density(&run.out, &dist, &outcome.params);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let env = manifold_env(run.manifold, run.target_points, run.sigma, run.alpha, &mut rng)?;
    let grid = product_grid(&trapezoid_grid(run.grid_size)?, 2)?;
    let target = boltzmann_target(|p| env.step(p), &grid, run.alpha)?;

    let order = match &run.orders {
        Some(orders) => {
            let rows = convergence_sweep(&target, orders, &grid, run.kind, &config)?;
            for row in &rows {
                if let Some(err) = &row.error {
                    eprintln!("mepoly: warning: order {} failed: {err}", row.order);
                } else if !row.converged {
                    eprintln!("mepoly: warning: order {} did not converge", row.order);
                }
            }
            io::write_csv(&run.out.join("convergence.csv"), &rows)?;
            *orders.last().expect("resolver rejects an empty sweep")
        }
        None => run.order,
    };

    let dist = distribution(2, order, run.grid_size, run.kind)?;
    let outcome = fit_moments(&target.moments(&dist)?, &dist, &config)?;
    warn_unconverged("fit", &outcome.report);
    let eval = dist.eval(&outcome.params)?;
    LambdaCheckpoint::new(&dist, &outcome.params)?.save(&run.out.join("lambda.bin"))?;
    let summary = FitSummary {
        source: manifold_name(run.manifold).into(),
        dim: 2,
        order,
        num_features: dist.num_features(),
        grid_size: run.grid_size,
        kind: run.kind,
        l1: Some(l1_distance(target.masses(), eval.masses())?),
        kl: Some(eval.kl_from(target.masses())?),
        moment_residual: outcome.report.moment_residual(),
        report: &outcome.report,
    };
    io::write_json(&run.out.join("fit_report.json"), &summary)?;
    write_density(&run.out, &dist, &outcome.params)
}

fn manifold_name(kind: ManifoldKind) -> &'static str {
    match kind {
        ManifoldKind::TwoMoons => "two_moons",
        ManifoldKind::Lemniscate => "lemniscate",
    }
}

#[derive(Serialize)]
struct BanditSummary<'a> {
    manifold: &'static str,
    last: &'a BanditRecord,
    /// Grid mass within 3σ of each moon; two-moons targets only.
    moon_coverage: Option<[f64; 2]>,
    max_abs_lambda: f64,
}

pub fn bandit(run: &BanditRun) -> Result<()> {
    prepare(&run.out, "bandit", run)?;
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let env = manifold_env(run.manifold, run.target_points, run.sigma, run.alpha, &mut rng)?;
    let dist = distribution(2, run.order, run.grid_size, FeatureKind::Legendre)?;
    let config = BanditConfig {
        alpha: run.alpha,
        learning_rate: run.learning_rate,
        batch_size: run.batch_size,
        iterations: run.steps,
        method: run.method,
        lambda_clip: run.lambda_clip,
        max_kl: run.max_kl,
        damping: run.damping,
    };
    let result = mepoly::rl::train_bandit(&env, &dist, &config, &mut rng)?;
    LambdaCheckpoint::new(&dist, &result.params)?.save(&run.out.join("lambda.bin"))?;
    io::write_csv(&run.out.join("bandit_trace.csv"), &result.history)?;
    write_density(&run.out, &dist, &result.params)?;

    let masses = dist.eval(&result.params)?.into_masses();
    let summary = BanditSummary {
        manifold: manifold_name(run.manifold),
        last: result.history.last().expect("history has a final record"),
        moon_coverage: (run.manifold == ManifoldKind::TwoMoons)
            .then(|| moon_coverage(dist.grid(), &masses, 3.0 * run.sigma)),
        max_abs_lambda: result.params.as_slice().iter().fold(0.0, |m, v| f64::max(m, v.abs())),
    };
    io::write_json(&run.out.join("summary.json"), &summary)?;
    Ok(())
}

fn resolve_layout(spec: &str) -> Result<SmoothWorld> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|source| mepoly::Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        return load_layout(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())));
    }
    let looks_like_path = spec.ends_with(".toml") || spec.contains(std::path::MAIN_SEPARATOR) || spec.contains('/');
    if looks_like_path {
        return Err(mepoly::Error::Io {
            path: PathBuf::from(spec),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "layout file not found"),
        }
        .into());
    }
    Ok(builtin_layout(spec)?)
}

#[derive(Serialize)]
struct MetricsRow {
    update: usize,
    steps: usize,
    episodes: usize,
    mean_episode_reward: f64,
    success_rate: f64,
    /// Per-goal episode counts joined with `;`.
    goal_counts: String,
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    approx_kl: f64,
    clip_fraction: f64,
}

#[derive(Serialize)]
struct HistogramRow {
    row: usize,
    col: usize,
    x: f64,
    y: f64,
    count: usize,
}

#[derive(Serialize)]
struct EvalSummary<'a> {
    layout: &'a str,
    distinct_goals: usize,
    metrics: &'a EvalMetrics,
}

fn join_counts(counts: &[usize]) -> String {
    counts.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

pub fn navigate(run: &NavigateRun) -> Result<()> {
    let world = resolve_layout(&run.layout)?;
    let config = run.ppo_config();
    config.validate()?;
    prepare(&run.out, "navigate", run)?;

    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let dist = distribution(2, run.order, run.grid_size, FeatureKind::Legendre)?;
    let mut policy = PolyPolicy::with_default_hidden(dist, &mut rng)?;
    let mut value = Mlp::with_default_hidden(2, 1, false, &mut rng)?;
    let logs = train_ppo(&world, &mut policy, &mut value, &config, &mut rng, |log| {
        eprintln!(
            "update {:>4}  steps {:>7}  reward {:>7.3}  success {:.2}  goals [{}]  entropy {:.3}",
            log.update,
            log.steps,
            log.mean_episode_reward,
            log.success_rate,
            join_counts(&log.goal_counts),
            log.entropy
        );
    })?;
    policy.net.save(&run.out.join("policy.bin"))?;
    value.save(&run.out.join("value.bin"))?;
    let rows: Vec<MetricsRow> = logs
        .iter()
        .map(|l| MetricsRow {
            update: l.update,
            steps: l.steps,
            episodes: l.episodes,
            mean_episode_reward: l.mean_episode_reward,
            success_rate: l.success_rate,
            goal_counts: join_counts(&l.goal_counts),
            policy_loss: l.policy_loss,
            value_loss: l.value_loss,
            entropy: l.entropy,
            approx_kl: l.approx_kl,
            clip_fraction: l.clip_fraction,
        })
        .collect();
    io::write_csv(&run.out.join("metrics.csv"), &rows)?;

    let evaluation = evaluate(&policy, &world, run.episodes, run.jitter, &mut rng)?;
    io::write_csv(&run.out.join("trajectories.csv"), &io::trajectory_rows(&evaluation.trajectories))?;
    write_histogram(&run.out, &evaluation.metrics)?;
    let summary = EvalSummary {
        layout: &run.layout,
        distinct_goals: evaluation.metrics.distinct_goals(),
        metrics: &evaluation.metrics,
    };
    io::write_json(&run.out.join("eval.json"), &summary)?;
    eprintln!(
        "evaluation: {} episodes, success {:.2}, goal counts [{}]",
        evaluation.metrics.episodes,
        evaluation.metrics.success_rate,
        join_counts(&evaluation.metrics.goal_counts)
    );
    Ok(())
}

/// Terminal positions as a CSV of bins and a PGM with `y = +1` at the top.
fn write_histogram(out: &Path, metrics: &EvalMetrics) -> Result<()> {
    let bins = metrics.bins;
    let center = |i: usize| -1.0 + (i as f64 + 0.5) * 2.0 / bins as f64;
    let rows: Vec<HistogramRow> = (0..bins * bins)
        .map(|i| HistogramRow {
            row: i / bins,
            col: i % bins,
            x: center(i % bins),
            y: center(i / bins),
            count: metrics.terminal_histogram[i],
        })
        .collect();
    io::write_csv(&out.join("terminal_histogram.csv"), &rows)?;
    let counts: Vec<f64> = metrics.terminal_histogram.iter().map(|&c| c as f64).collect();
    let gray = io::to_gray(&counts);
    let pixels: Vec<u8> = (0..bins)
        .rev()
        .flat_map(|row| gray[row * bins..(row + 1) * bins].iter().copied())
        .collect();
    io::write_pgm(&out.join("terminal_histogram.pgm"), bins, bins, &pixels)?;
    Ok(())
}

fn load_checkpoint(path: Option<&PathBuf>) -> Result<(PolyDistribution, NaturalParams)> {
    let path = path.ok_or_else(|| CliError::Usage("missing --checkpoint".into()))?;
    let checkpoint = LambdaCheckpoint::load(path)?;
    Ok((checkpoint.distribution()?, checkpoint.params()?))
}

pub fn sample(run: &SampleRun) -> Result<()> {
    let (dist, params) = load_checkpoint(run.checkpoint.as_ref())?;
    prepare(&run.out, "sample", run)?;
    let eval = dist.eval(&params)?;
    let sampler = eval.sampler();
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let rows: Vec<Vec<f64>> = (0..run.n)
        .map(|_| {
            let s = sampler.sample(&mut rng, run.jitter);
            let mut row = s.action;
            row.push(s.log_prob);
            row
        })
        .collect();
    let mut header: Vec<String> = (0..dist.dim()).map(|i| format!("x{i}")).collect();
    header.push("log_prob".into());
    io::write_table(&run.out.join("samples.csv"), &header, &rows)?;
    Ok(())
}

pub fn density(run: &DensityRun) -> Result<()> {
    let (dist, params) = load_checkpoint(run.checkpoint.as_ref())?;
    if dist.dim() > 2 {
        return Err(CliError::Usage(format!(
            "density export supports 1D and 2D checkpoints, this one is {}D",
            dist.dim()
        )));
    }
    prepare(&run.out, "density", run)?;
    DensityDump::new(&dist, &params)?.write(&run.out.join("density.csv"), &run.out.join("density.pgm"))?;
    Ok(())
}
