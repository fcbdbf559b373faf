//! Maximum-entropy fitting of natural parameters.
//!
//! Both fits maximize the concave dual `λ·m − A(λ)` (plus an optional
//! entropy bonus), whose gradient is the moment residual `m − E_λ[T]`.
//! The constant feature is pinned at zero since it only shifts `A`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::{ExponentSet, FeatureKind};
use crate::distribution::{l1_distance, NaturalParams, PolyDistribution};
use crate::error::{Error, Result};
use crate::quadrature::{dot, precompute_features_kind, ProductGrid};

/// Mean feature vector `E[T(a)]`; the constant entry is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVector(Vec<f64>);

impl MomentVector {
    pub fn new(moments: Vec<f64>) -> Result<Self> {
        match moments.first() {
            Some(&first) if (first - 1.0).abs() <= 1e-9 => Ok(Self(moments)),
            Some(&first) => Err(Error::InvalidArgument(format!(
                "constant moment must be 1, got {first}"
            ))),
            None => Err(Error::Empty("moment vector")),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    /// Steepest ascent on the raw gradient.
    Gradient,
    /// Ascent along `Cov(T)⁻¹ · gradient` (Newton's direction for the dual).
    Natural,
}

pub const DEFAULT_FIT_LAMBDA_CLIP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Initial step of each backtracking line search.
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop once the sup-norm of the gradient drops below this.
    pub grad_tol: f64,
    /// Weight of the entropy bonus in the MLE objective.
    pub entropy_coef: f64,
    pub method: FitMethod,
    /// Box on `|λ_j|`; iterates are projected onto it. The default is
    /// effectively unbounded: moment-matching a sharply peaked target at
    /// high order needs coefficients far beyond the policy clip.
    pub lambda_clip: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            step_size: 1.0,
            max_iters: 500,
            grad_tol: 1e-8,
            entropy_coef: 0.0,
            method: FitMethod::Natural,
            lambda_clip: DEFAULT_FIT_LAMBDA_CLIP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub converged: bool,
    /// Mean negative log-likelihood of the data (or `A(λ) − λ·m` for moments).
    pub final_nll: f64,
    pub final_entropy: f64,
    pub grad_norm: f64,
    /// Objective-to-minimize (`nll − coef·entropy`) after every accepted step.
    pub losses: Vec<f64>,
    pub target_moments: Vec<f64>,
    pub final_moments: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl FitReport {
    pub fn moment_residual(&self) -> f64 {
        self.target_moments
            .iter()
            .zip(&self.final_moments)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: NaturalParams,
    pub report: FitReport,
}

/// Mean feature vector of a sample set.
pub fn empirical_moments(
    samples: &[Vec<f64>],
    basis: &ExponentSet,
    kind: FeatureKind,
) -> Result<MomentVector> {
    if samples.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let mut acc = vec![0.0; basis.len()];
    let mut buf = vec![0.0; basis.len()];
    for s in samples {
        basis.features_into(s, kind, &mut buf)?;
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b;
        }
    }
    let n = samples.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    MomentVector::new(acc)
}

/// Maximum-likelihood fit (with optional entropy bonus) to `samples`.
pub fn fit_mle(
    samples: &[Vec<f64>],
    dist: &PolyDistribution,
    config: &FitConfig,
) -> Result<FitOutcome> {
    let moments = empirical_moments(samples, dist.basis(), dist.kind())?;
    ascend(dist, &moments, config)
}

/// Maximum-entropy density matching `target` moments.
pub fn fit_moments(
    target: &MomentVector,
    dist: &PolyDistribution,
    config: &FitConfig,
) -> Result<FitOutcome> {
    let config = FitConfig {
        entropy_coef: 0.0,
        ..*config
    };
    ascend(dist, target, &config)
}

struct Point {
    lambda: Vec<f64>,
    objective: f64,
    nll: f64,
    entropy: f64,
    moments: Vec<f64>,
    gradient: Vec<f64>,
    cov: Option<Vec<f64>>,
}

fn evaluate(
    dist: &PolyDistribution,
    lambda: Vec<f64>,
    target: &[f64],
    coef: f64,
) -> Result<Point> {
    let e = dist.eval_raw(&lambda)?;
    let nll = e.log_partition() - dot(&lambda, target);
    let entropy = e.entropy();
    let moments = e.expected_features();
    let mut gradient: Vec<f64> = target.iter().zip(&moments).map(|(t, m)| t - m).collect();
    if coef > 0.0 {
        for (g, h) in gradient.iter_mut().zip(e.entropy_gradient()) {
            *g += coef * h;
        }
    }
    gradient[0] = 0.0;
    Ok(Point {
        objective: nll - coef * entropy,
        lambda,
        nll,
        entropy,
        moments,
        gradient,
        cov: None,
    })
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solve `(Cov + ρ·max diag·I) · d = g` over the non-constant coordinates.
pub(crate) fn natural_direction(cov: &[f64], g: &[f64], damping: f64) -> Option<Vec<f64>> {
    let m = g.len();
    let k = m - 1;
    let mut mat = DMatrix::from_fn(k, k, |i, j| cov[(i + 1) * m + (j + 1)]);
    let max_diag = (0..k).map(|i| mat[(i, i)]).fold(0.0, f64::max);
    let ridge = damping * max_diag.max(1e-300);
    for i in 0..k {
        mat[(i, i)] += ridge;
    }
    let rhs = DVector::from_iterator(k, g[1..].iter().copied());
    let sol = mat.cholesky()?.solve(&rhs);
    let mut d = vec![0.0; m];
    d[1..].copy_from_slice(sol.as_slice());
    Some(d)
}

fn ascend(dist: &PolyDistribution, target: &MomentVector, config: &FitConfig) -> Result<FitOutcome> {
    if target.len() != dist.num_features() {
        return Err(Error::DimensionMismatch {
            expected: dist.num_features(),
            actual: target.len(),
        });
    }
    if !(config.step_size > 0.0) {
        return Err(Error::InvalidArgument("step_size must be positive".into()));
    }
    let target = target.as_slice();
    let coef = config.entropy_coef;
    let natural = config.method == FitMethod::Natural;
    let clip = config.lambda_clip;
    let m = dist.num_features();

    let with_cov = |mut p: Point| -> Result<Point> {
        if natural {
            p.cov = Some(dist.eval_raw(&p.lambda)?.covariance());
        }
        Ok(p)
    };
    let mut current = with_cov(evaluate(dist, vec![0.0; m], target, coef)?)?;
    let mut losses = vec![current.objective];
    let mut iterations = 0;
    let mut converged = sup_norm(&current.gradient) <= config.grad_tol;

    while !converged && iterations < config.max_iters {
        iterations += 1;
        let direction = match (natural, current.cov.as_ref()) {
            (true, Some(cov)) => {
                natural_direction(cov, &current.gradient, 1e-12).unwrap_or_else(|| current.gradient.clone())
            }
            _ => current.gradient.clone(),
        };
        let slope = dot(&direction, &current.gradient);
        let mut step = config.step_size;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate: Vec<f64> = current
                .lambda
                .iter()
                .zip(&direction)
                .map(|(l, d)| (l + step * d).clamp(-clip, clip))
                .collect();
            if candidate.iter().any(|l| !l.is_finite()) {
                return Err(Error::Diverged {
                    iteration: iterations,
                    reason: "non-finite search direction".into(),
                });
            }
            let next = evaluate(dist, candidate, target, coef)?;
            if !next.objective.is_finite() {
                return Err(Error::Diverged {
                    iteration: iterations,
                    reason: format!("non-finite objective {}", next.objective),
                });
            }
            // Armijo condition on the objective to minimize.
            if next.objective <= current.objective - 1e-4 * step * slope {
                accepted = Some(next);
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some(next) => {
                current = with_cov(next)?;
                losses.push(current.objective);
                converged = sup_norm(&current.gradient) <= config.grad_tol;
            }
            // No ascent possible in floating point: the iterate is stationary
            // up to round-off, or pinned against the clip box.
            None => break,
        }
    }

    let params = NaturalParams::clipped(&current.lambda, clip)?;
    let report = FitReport {
        iterations,
        converged,
        final_nll: current.nll,
        final_entropy: current.entropy,
        grad_norm: sup_norm(&current.gradient),
        losses,
        target_moments: target.to_vec(),
        final_moments: current.moments,
        lambda: current.lambda,
    };
    Ok(FitOutcome { params, report })
}

/// `exp(−min_i ‖a − x_i‖² / (2σ²))`.
pub fn manifold_reward(action: &[f64], target_points: &[[f64; 2]], sigma: f64) -> Result<f64> {
    if target_points.is_empty() {
        return Err(Error::Empty("target point set"));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if action.len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: action.len(),
        });
    }
    Ok((-nearest_sq_distance(action, target_points) / (2.0 * sigma * sigma)).exp())
}

pub(crate) fn nearest_sq_distance(a: &[f64], points: &[[f64; 2]]) -> f64 {
    points
        .iter()
        .map(|p| (a[0] - p[0]).powi(2) + (a[1] - p[1]).powi(2))
        .fold(f64::INFINITY, f64::min)
}

/// Normalized probability masses over the points of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    masses: Vec<f64>,
}

impl GridDensity {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::Empty("grid density"));
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidArgument("masses must be finite and non-negative".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { masses })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// `E[T]` under these masses, using `dist`'s feature table.
    pub fn moments(&self, dist: &PolyDistribution) -> Result<MomentVector> {
        if dist.grid().len() != self.masses.len() {
            return Err(Error::DimensionMismatch {
                expected: dist.grid().len(),
                actual: self.masses.len(),
            });
        }
        let mut out = vec![0.0; dist.num_features()];
        dist.table().weighted_column_sums(&self.masses, &mut out);
        MomentVector::new(out)
    }

    /// Total mass on points satisfying `pred`.
    pub fn mass_where<F: Fn(&[f64]) -> bool>(&self, grid: &ProductGrid, pred: F) -> f64 {
        grid.points()
            .zip(&self.masses)
            .filter(|(p, _)| pred(p))
            .map(|(_, m)| m)
            .sum()
    }
}

/// Boltzmann masses `∝ exp(r(x)/α) · w(x)` over the grid.
pub fn boltzmann_target<F: Fn(&[f64]) -> f64>(
    reward: F,
    grid: &ProductGrid,
    alpha: f64,
) -> Result<GridDensity> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {alpha}"
        )));
    }
    let logits: Vec<f64> = grid
        .points()
        .zip(grid.log_weights())
        .map(|(p, lw)| reward(p) / alpha + lw)
        .collect();
    let log_z = crate::distribution::logsumexp(&logits);
    let masses: Vec<f64> = logits.iter().map(|l| (l - log_z).exp()).collect();
    let total: f64 = masses.iter().sum();
    GridDensity::new(masses.into_iter().map(|m| m / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub order: usize,
    pub num_features: usize,
    pub l1: f64,
    /// `KL(target ‖ fit)`, the quantity moment matching minimizes.
    pub kl: f64,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

/// Fit the target's moments at each order and record its distance to the fit.
pub fn convergence_sweep(
    target: &GridDensity,
    orders: &[usize],
    grid: &ProductGrid,
    kind: FeatureKind,
    config: &FitConfig,
) -> Result<Vec<SweepRow>> {
    if orders.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("orders must be strictly ascending".into()));
    }
    let mut rows = Vec::with_capacity(orders.len());
    for &order in orders {
        let basis = ExponentSet::new(grid.dim(), order)?;
        let num_features = basis.len();
        let dist = PolyDistribution::with_kind(basis, grid.clone(), kind)?;
        let row = target
            .moments(&dist)
            .and_then(|mom| fit_moments(&mom, &dist, config))
            .and_then(|fit| {
                let eval = dist.eval(&fit.params)?;
                Ok(SweepRow {
                    order,
                    num_features,
                    l1: l1_distance(target.masses(), eval.masses())?,
                    kl: eval.kl_from(target.masses())?,
                    iterations: fit.report.iterations,
                    converged: fit.report.converged,
                    error: None,
                })
            });
        rows.push(row.unwrap_or_else(|e| SweepRow {
            order,
            num_features,
            l1: f64::NAN,
            kl: f64::NAN,
            iterations: 0,
            converged: false,
            error: Some(e.to_string()),
        }));
    }
    Ok(rows)
}

/// Condition number of the weighted Gram matrix `Σ_x w(x) T(x) T(x)ᵀ`.
pub fn gram_condition_number(
    grid: &ProductGrid,
    basis: &ExponentSet,
    kind: FeatureKind,
) -> Result<f64> {
    let table = precompute_features_kind(grid, basis, kind)?;
    let m = basis.len();
    let mut gram = DMatrix::<f64>::zeros(m, m);
    for (row, lw) in table.iter_rows().zip(grid.log_weights()) {
        let w = lw.exp();
        for i in 0..m {
            for j in 0..m {
                gram[(i, j)] += w * row[i] * row[j];
            }
        }
    }
    let eig = SymmetricEigen::new(gram).eigenvalues;
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if min > 0.0 { max / min } else { f64::INFINITY })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::DEFAULT_LAMBDA_CLIP;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn draw(dist: &PolyDistribution, p: &NaturalParams, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let e = dist.eval(p).unwrap();
        let s = e.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| s.sample(&mut rng, false).action).collect()
    }

    #[test]
    fn empirical_moment_examples() {
        let basis = ExponentSet::new(2, 3).unwrap();
        let a = vec![0.3, -0.6];
        let m = empirical_moments(std::slice::from_ref(&a), &basis, FeatureKind::Legendre).unwrap();
        assert_eq!(m.as_slice(), basis.features(&a, FeatureKind::Legendre).unwrap().as_slice());

        let pairs = vec![vec![0.2, 0.7], vec![-0.2, -0.7], vec![0.9, -0.1], vec![-0.9, 0.1]];
        let m = empirical_moments(&pairs, &basis, FeatureKind::Legendre).unwrap();
        for j in 0..basis.len() {
            if basis.total_degree(j) % 2 == 1 {
                assert!(m.as_slice()[j].abs() < 1e-15);
            }
        }
        assert!(matches!(
            empirical_moments(&[], &basis, FeatureKind::Legendre),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn uniform_samples_match_uniform_moments() {
        let dist = PolyDistribution::full(2, 3, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let samples: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)])
            .collect();
        let emp = empirical_moments(&samples, dist.basis(), FeatureKind::Legendre).unwrap();
        let quad = dist.expected_features(&NaturalParams::zeros(10)).unwrap();
        for j in 1..10 {
            let vals: Vec<f64> = samples
                .iter()
                .map(|s| dist.features(s).unwrap()[j])
                .collect();
            let mean = emp.as_slice()[j];
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            // the quadrature moment carries an O(h²) bias on top of MC noise
            assert!((mean - quad[j]).abs() < 3.0 * se + 2e-3, "j={j}");
        }
    }

    #[test]
    fn uniform_data_fits_near_zero() {
        let dist = PolyDistribution::full(2, 2, 32).unwrap();
        // every grid point once, in proportion to its weight: exact uniform data
        let uniform = dist.eval(&NaturalParams::zeros(6)).unwrap();
        let mom = MomentVector::new(uniform.expected_features()).unwrap();
        let fit = fit_moments(&mom, &dist, &FitConfig::default()).unwrap();
        assert!(fit.params.as_slice()[1..].iter().all(|l| l.abs() < 0.05));
        assert!(fit.report.converged);

        let samples = draw(&dist, &NaturalParams::zeros(6), 50_000, 3);
        let fit = fit_mle(&samples, &dist, &FitConfig::default()).unwrap();
        assert!(fit.params.as_slice()[1..].iter().all(|l| l.abs() < 0.05), "{:?}", fit.params);
    }

    #[test]
    fn mle_is_stationary_and_monotone() {
        let dist = PolyDistribution::full(2, 2, 32).unwrap();
        let truth = NaturalParams::clipped(&[0.0, 0.4, -1.5, 0.3, 0.8, -2.0], 5.0).unwrap();
        let samples = draw(&dist, &truth, 20_000, 4);
        for method in [FitMethod::Natural, FitMethod::Gradient] {
            let config = FitConfig {
                method,
                max_iters: if method == FitMethod::Gradient { 20_000 } else { 100 },
                grad_tol: 1e-7,
                ..FitConfig::default()
            };
            let fit = fit_mle(&samples, &dist, &config).unwrap();
            assert!(fit.report.converged, "{method:?}");
            assert!(fit.report.moment_residual() <= config.grad_tol);
            assert!(fit.report.losses.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn entropy_bonus_raises_entropy() {
        let dist = PolyDistribution::full(1, 4, 64).unwrap();
        let truth = NaturalParams::clipped(&[0.0, 0.5, 2.0, 0.0, -1.0], 5.0).unwrap();
        let samples = draw(&dist, &truth, 5_000, 6);
        let plain = fit_mle(&samples, &dist, &FitConfig::default()).unwrap();
        let config = FitConfig {
            entropy_coef: 0.5,
            max_iters: 2000,
            ..FitConfig::default()
        };
        let reg = fit_mle(&samples, &dist, &config).unwrap();
        assert!(reg.report.final_entropy >= plain.report.final_entropy);
        assert!(reg.report.final_nll >= plain.report.final_nll);
    }

    #[test]
    fn exponential_tilt_from_single_moment() {
        // Only E[P_1] = 0.3 constrained: the fit is exp(θ a) on [-1, 1].
        let dist = PolyDistribution::full(1, 1, 1025).unwrap();
        let target = MomentVector::new(vec![1.0, 0.3]).unwrap();
        let fit = fit_moments(&target, &dist, &FitConfig::default()).unwrap();
        // Oracle: solve coth θ − 1/θ = 0.3 by bisection.
        let mean = |t: f64| 1.0 / t.tanh() - 1.0 / t;
        let (mut lo, mut hi) = (1e-6, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean(mid) < 0.3 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let theta = 0.5 * (lo + hi);
        assert!((fit.params.as_slice()[1] - theta).abs() < 1e-4);
        let ea = dist.expected_action(&fit.params).unwrap()[0];
        assert!((ea - 0.3).abs() < 1e-8);
    }

    #[test]
    fn moment_round_trip_recovers_params() {
        let dist = PolyDistribution::full(2, 3, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let raw: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let truth = NaturalParams::clipped(&raw, DEFAULT_LAMBDA_CLIP).unwrap();
        let mom = MomentVector::new(dist.expected_features(&truth).unwrap()).unwrap();
        let fit = fit_moments(&mom, &dist, &FitConfig::default()).unwrap();
        let err = fit.params.as_slice()[1..]
            .iter()
            .zip(&truth.as_slice()[1..])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "max abs error {err}");
    }

    #[test]
    fn infeasible_moments_are_reported() {
        let dist = PolyDistribution::full(1, 2, 64).unwrap();
        // E[P_1] beyond the support: no finite λ attains it
        let target = MomentVector::new(vec![1.0, 1.2, 1.0]).unwrap();
        let config = FitConfig {
            max_iters: 50,
            ..FitConfig::default()
        };
        match fit_moments(&target, &dist, &config) {
            Ok(fit) => assert!(!fit.report.converged),
            Err(e) => assert!(matches!(e, Error::Diverged { .. }), "{e}"),
        }
        assert!(MomentVector::new(vec![0.5, 0.0]).is_err());
    }

    #[test]
    fn fitted_density_is_max_entropy_among_moment_matches() {
        use nalgebra::{DMatrix, DVector};
        let dist = PolyDistribution::full(1, 3, 24).unwrap();
        let truth = NaturalParams::clipped(&[0.0, 0.7, -1.2, 0.4], 5.0).unwrap();
        let e = dist.eval(&truth).unwrap();
        let masses = e.masses().to_vec();
        let lw = dist.grid().log_weights();
        let grid_entropy = |m: &[f64]| -> f64 {
            m.iter().zip(lw).map(|(mi, w)| -mi * (mi.ln() - w)).sum()
        };
        let base = grid_entropy(&masses);
        let n = masses.len();
        let f = DMatrix::from_row_slice(n, 4, dist.table().as_slice());
        let gram = f.transpose() * &f;
        let inv = gram.try_inverse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..20 {
            let r = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let delta = &r - &f * (&inv * (f.transpose() * &r));
            let scale = masses.iter().copied().fold(f64::INFINITY, f64::min) * 0.5
                / delta.amax();
            let perturbed: Vec<f64> = masses
                .iter()
                .zip(delta.iter())
                .map(|(m, d)| m + scale * d)
                .collect();
            assert!(grid_entropy(&perturbed) <= base + 1e-12);
        }
    }

    #[test]
    fn manifold_reward_examples() {
        let pts = [[0.1, 0.2], [-0.5, 0.5]];
        assert_eq!(manifold_reward(&[0.1, 0.2], &pts, 0.05).unwrap(), 1.0);
        let r = manifold_reward(&[0.1 + 0.05, 0.2], &pts, 0.05).unwrap();
        assert!((r - (-0.5f64).exp()).abs() < 1e-12);
        let r = manifold_reward(&[0.1, 0.3], &pts, 0.05).unwrap();
        assert!((r - (-2f64).exp()).abs() < 1e-12);
        assert!(manifold_reward(&[0.0, 0.0], &[], 0.05).is_err());
    }

    #[test]
    fn boltzmann_target_limits() {
        let dist = PolyDistribution::full(2, 2, 16).unwrap();
        let grid = dist.grid();
        let flat = boltzmann_target(|_| 0.7, grid, 0.05).unwrap();
        let w: Vec<f64> = grid.log_weights().iter().map(|l| l.exp() / 4.0).collect();
        assert!(flat.masses().iter().zip(&w).all(|(m, w)| (m - w).abs() < 1e-14));

        let hot = boltzmann_target(|p| p[0], grid, 1e6).unwrap();
        let ratio = hot
            .masses()
            .iter()
            .zip(&w)
            .map(|(m, w)| m / w)
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
        assert!(ratio.1 / ratio.0 < 1.0 + 1e-5);
        assert!(boltzmann_target(|_| 0.0, grid, 0.0).is_err());
    }

    #[test]
    fn realizable_target_is_matched_at_its_order() {
        let dist = PolyDistribution::full(2, 2, 32).unwrap();
        let truth = NaturalParams::clipped(&[0.0, 0.5, -2.0, 0.3, 1.0, -1.5], 5.0).unwrap();
        let target = GridDensity::new(dist.masses(&truth).unwrap()).unwrap();
        let rows = convergence_sweep(&target, &[2, 4], dist.grid(), FeatureKind::Legendre, &FitConfig::default())
            .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].l1 < 1e-2 && rows[1].l1 < 1e-2);
        assert!(convergence_sweep(&target, &[4, 2], dist.grid(), FeatureKind::Legendre, &FitConfig::default()).is_err());
    }

    #[test]
    fn legendre_gram_is_better_conditioned() {
        let grid = crate::quadrature::product_grid(&crate::quadrature::trapezoid_grid(64).unwrap(), 1).unwrap();
        let basis = ExponentSet::new(1, 8).unwrap();
        let leg = gram_condition_number(&grid, &basis, FeatureKind::Legendre).unwrap();
        let mono = gram_condition_number(&grid, &basis, FeatureKind::Monomial).unwrap();
        assert!(leg < mono, "{leg} vs {mono}");
        assert!(leg < 100.0);
    }
}
