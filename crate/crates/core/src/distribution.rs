//! The polynomial exponential-family density
//! `π(a) = exp(⟨λ, T(a)⟩ − A(λ))` on `[-1, 1]^dim`, normalized by
//! quadrature over a fixed grid.

use rand::Rng;

use crate::basis::{ExponentSet, FeatureKind};
use crate::error::{Error, Result};
use crate::quadrature::{
    dot, precompute_features_kind, product_grid, stochastic_grid, trapezoid_grid, FeatureTable,
    ProductGrid, DEFAULT_FULL_GRID_MAX_DIM, DEFAULT_STOCHASTIC_GRID_SIZE,
};

pub const DEFAULT_LAMBDA_CLIP: f64 = 5.0;

/// Natural parameters, every entry inside `[-clip, clip]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParams {
    lambda: Vec<f64>,
    clip: f64,
}

impl NaturalParams {
    /// Elementwise clamp of `raw` to `±clip`. Non-finite entries are an error.
    pub fn clipped(raw: &[f64], clip: f64) -> Result<Self> {
        if !(clip > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "clip must be positive, got {clip}"
            )));
        }
        if let Some((index, &value)) = raw.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteParameter { index, value });
        }
        Ok(Self {
            lambda: raw.iter().map(|v| v.clamp(-clip, clip)).collect(),
            clip,
        })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            lambda: vec![0.0; len],
            clip: DEFAULT_LAMBDA_CLIP,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.lambda
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.lambda
    }

    /// Mask of coordinates left untouched by the clamp; gradients flow only
    /// through these.
    pub fn pass_through_mask(raw: &[f64], clip: f64) -> Vec<bool> {
        raw.iter().map(|v| v.abs() <= clip).collect()
    }
}

/// One drawn action with its grid-point log-density.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub index: usize,
}

/// A basis, a quadrature grid and the grid's feature table.
#[derive(Debug, Clone)]
pub struct PolyDistribution {
    basis: ExponentSet,
    grid: ProductGrid,
    table: FeatureTable,
    kind: FeatureKind,
    lambda_clip: f64,
}

impl PolyDistribution {
    pub fn new(basis: ExponentSet, grid: ProductGrid) -> Result<Self> {
        Self::with_kind(basis, grid, FeatureKind::Legendre)
    }

    pub fn with_kind(basis: ExponentSet, grid: ProductGrid, kind: FeatureKind) -> Result<Self> {
        let table = precompute_features_kind(&grid, &basis, kind)?;
        Ok(Self {
            basis,
            grid,
            table,
            kind,
            lambda_clip: DEFAULT_LAMBDA_CLIP,
        })
    }

    /// Legendre distribution on a full tensor grid of `grid_size` nodes per
    /// axis (`dim` up to 3).
    pub fn full(dim: usize, order: usize, grid_size: usize) -> Result<Self> {
        let basis = ExponentSet::new(dim, order)?;
        let grid = product_grid(&trapezoid_grid(grid_size)?, dim)?;
        Self::new(basis, grid)
    }

    /// Full grid up to dim 3, a seeded lattice-sampled grid above that.
    pub fn auto<R: Rng + ?Sized>(
        dim: usize,
        order: usize,
        grid_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let basis = ExponentSet::new(dim, order)?;
        let g = trapezoid_grid(grid_size)?;
        let grid = if dim <= DEFAULT_FULL_GRID_MAX_DIM {
            product_grid(&g, dim)?
        } else {
            stochastic_grid(&g, dim, DEFAULT_STOCHASTIC_GRID_SIZE, rng)?
        };
        Self::new(basis, grid)
    }

    pub fn with_lambda_clip(mut self, clip: f64) -> Self {
        self.lambda_clip = clip;
        self
    }

    pub fn basis(&self) -> &ExponentSet {
        &self.basis
    }

    pub fn grid(&self) -> &ProductGrid {
        &self.grid
    }

    pub fn table(&self) -> &FeatureTable {
        &self.table
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn num_features(&self) -> usize {
        self.basis.len()
    }

    pub fn lambda_clip(&self) -> f64 {
        self.lambda_clip
    }

    /// Clamp raw network output into valid natural parameters.
    pub fn clip_params(&self, raw: &[f64]) -> Result<NaturalParams> {
        self.check_len(raw.len())?;
        NaturalParams::clipped(raw, self.lambda_clip)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.num_features() {
            return Err(Error::DimensionMismatch {
                expected: self.num_features(),
                actual: len,
            });
        }
        Ok(())
    }

    /// Feature vector of an action under this distribution's basis and kind.
    pub fn features(&self, action: &[f64]) -> Result<Vec<f64>> {
        self.basis.features(action, self.kind)
    }

    /// Evaluate `p` on every grid point. Most queries go through the result.
    pub fn eval(&self, p: &NaturalParams) -> Result<GridEval<'_>> {
        self.eval_raw(p.as_slice())
    }

    /// As [`eval`](Self::eval) without the clip invariant, for fitting code
    /// that works with unconstrained coefficients.
    pub fn eval_raw(&self, lambda: &[f64]) -> Result<GridEval<'_>> {
        self.check_len(lambda.len())?;
        if let Some((index, &value)) = lambda.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteParameter { index, value });
        }
        let mut logits = vec![0.0; self.grid.len()];
        self.table.mat_vec(lambda, &mut logits);
        let shifted: Vec<f64> = logits
            .iter()
            .zip(self.grid.log_weights())
            .map(|(l, w)| l + w)
            .collect();
        let log_z = logsumexp(&shifted);
        let masses = shifted.iter().map(|s| (s - log_z).exp()).collect();
        Ok(GridEval {
            dist: self,
            lambda: lambda.to_vec(),
            logits,
            log_z,
            masses,
        })
    }

    pub fn log_partition(&self, p: &NaturalParams) -> Result<f64> {
        Ok(self.eval(p)?.log_z)
    }

    /// Log-density at `action`. Actions outside the box are clamped onto it.
    pub fn log_prob(&self, p: &NaturalParams, action: &[f64]) -> Result<f64> {
        self.eval(p)?.log_prob(action)
    }

    pub fn entropy(&self, p: &NaturalParams) -> Result<f64> {
        Ok(self.eval(p)?.entropy())
    }

    pub fn sample<R: Rng + ?Sized>(&self, p: &NaturalParams, rng: &mut R) -> Result<Sample> {
        Ok(self.eval(p)?.sampler().sample(rng, false))
    }

    pub fn expected_action(&self, p: &NaturalParams) -> Result<Vec<f64>> {
        Ok(self.eval(p)?.expected_action())
    }

    pub fn expected_features(&self, p: &NaturalParams) -> Result<Vec<f64>> {
        Ok(self.eval(p)?.expected_features())
    }

    pub fn masses(&self, p: &NaturalParams) -> Result<Vec<f64>> {
        Ok(self.eval(p)?.masses)
    }

    /// `KL(p ‖ q)` over the grid masses.
    pub fn kl_divergence(&self, p: &NaturalParams, q: &NaturalParams) -> Result<f64> {
        Ok(self.eval(p)?.kl_to(&self.eval(q)?))
    }
}

/// One parameter vector evaluated over the grid.
#[derive(Debug, Clone)]
pub struct GridEval<'a> {
    dist: &'a PolyDistribution,
    lambda: Vec<f64>,
    logits: Vec<f64>,
    log_z: f64,
    masses: Vec<f64>,
}

impl<'a> GridEval<'a> {
    pub fn distribution(&self) -> &'a PolyDistribution {
        self.dist
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn log_partition(&self) -> f64 {
        self.log_z
    }

    /// `⟨λ, T(x)⟩` at every grid point.
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// Normalized grid masses `∝ exp(⟨λ, T(x)⟩ + log w(x))`.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn into_masses(self) -> Vec<f64> {
        self.masses
    }

    /// Log-density at grid point `index`.
    pub fn grid_log_prob(&self, index: usize) -> f64 {
        self.logits[index] - self.log_z
    }

    pub fn log_prob(&self, action: &[f64]) -> Result<f64> {
        let f = self.dist.features(&clamp_to_box(action))?;
        Ok(dot(&f, &self.lambda) - self.log_z)
    }

    /// Log-density given a precomputed feature vector.
    pub fn log_prob_features(&self, features: &[f64]) -> f64 {
        dot(features, &self.lambda) - self.log_z
    }

    /// `−Σ_x p(x) log p(x) w(x)` with `p` the grid density. Since the masses
    /// `p(x) w(x)` sum to one this is `A(λ) − Σ_x mass(x) ⟨λ, T(x)⟩`.
    pub fn entropy(&self) -> f64 {
        let mean_logit: f64 = self
            .masses
            .iter()
            .zip(&self.logits)
            .map(|(m, l)| m * l)
            .sum();
        self.log_z - mean_logit
    }

    pub fn expected_features(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dist.num_features()];
        self.dist.table.weighted_column_sums(&self.masses, &mut out);
        out
    }

    pub fn expected_action(&self) -> Vec<f64> {
        let dim = self.dist.dim();
        let mut out = vec![0.0; dim];
        for (m, x) in self.masses.iter().zip(self.dist.grid.points()) {
            for (o, xi) in out.iter_mut().zip(x) {
                *o += m * xi;
            }
        }
        out
    }

    /// `Cov(T) · v` under the grid masses.
    pub fn covariance_times(&self, v: &[f64]) -> Vec<f64> {
        let mu = self.expected_features();
        let proj: Vec<f64> = self
            .dist
            .table
            .iter_rows()
            .zip(&self.masses)
            .map(|(row, m)| m * dot(row, v))
            .collect();
        let mut out = vec![0.0; mu.len()];
        self.dist.table.weighted_column_sums(&proj, &mut out);
        let mean_proj = dot(&mu, v);
        for (o, m) in out.iter_mut().zip(&mu) {
            *o -= m * mean_proj;
        }
        out
    }

    /// Full feature covariance (the Fisher information of `λ`), row-major.
    pub fn covariance(&self) -> Vec<f64> {
        let m = self.dist.num_features();
        let mu = self.expected_features();
        let mut cov = vec![0.0; m * m];
        for (row, &w) in self.dist.table.iter_rows().zip(&self.masses) {
            if w == 0.0 {
                continue;
            }
            for i in 0..m {
                let wi = w * row[i];
                let dst = &mut cov[i * m..(i + 1) * m];
                for (c, r) in dst[i..].iter_mut().zip(&row[i..]) {
                    *c += wi * r;
                }
            }
        }
        for i in 0..m {
            for j in i..m {
                let v = cov[i * m + j] - mu[i] * mu[j];
                cov[i * m + j] = v;
                cov[j * m + i] = v;
            }
        }
        cov
    }

    /// Exact gradient of the entropy with respect to `λ`: `−Cov(T)·λ`.
    pub fn entropy_gradient(&self) -> Vec<f64> {
        self.covariance_times(&self.lambda)
            .into_iter()
            .map(|v| -v)
            .collect()
    }

    /// `KL(self ‖ other)` from log-masses, so underflowed tails stay finite.
    /// Both evaluations must share a distribution.
    pub fn kl_to(&self, other: &GridEval<'_>) -> f64 {
        debug_assert_eq!(self.logits.len(), other.logits.len());
        self.masses
            .iter()
            .zip(self.logits.iter().zip(&other.logits))
            .map(|(m, (lp, lq))| m * ((lp - self.log_z) - (lq - other.log_z)))
            .sum()
    }

    /// `KL(p ‖ self)` for grid masses `p`, using this evaluation's
    /// log-masses so that its underflowed tails stay finite.
    pub fn kl_from(&self, p: &[f64]) -> Result<f64> {
        if p.len() != self.masses.len() {
            return Err(Error::DimensionMismatch {
                expected: self.masses.len(),
                actual: p.len(),
            });
        }
        Ok(p.iter()
            .zip(self.logits.iter().zip(self.dist.grid.log_weights()))
            .filter(|(m, _)| **m > 0.0)
            .map(|(m, (l, w))| m * (m.ln() - (l + w - self.log_z)))
            .sum())
    }

    /// Inverse-CDF sampler over the grid masses.
    pub fn sampler(&self) -> Sampler<'_> {
        let mut acc = 0.0;
        let cdf = self
            .masses
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        Sampler { eval: self, cdf }
    }
}

/// Cumulative grid masses ready for repeated draws.
#[derive(Debug, Clone)]
pub struct Sampler<'e> {
    eval: &'e GridEval<'e>,
    cdf: Vec<f64>,
}

impl Sampler<'_> {
    /// First index whose cumulative mass reaches `u`, clamped to the last cell.
    pub fn index_for(&self, u: f64) -> usize {
        self.cdf
            .partition_point(|&c| c < u)
            .min(self.cdf.len() - 1)
    }

    /// Draw one grid point. With `jitter` the returned action is moved
    /// uniformly inside its quadrature cell; the reported log-density stays
    /// that of the grid point.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, jitter: bool) -> Sample {
        let u: f64 = rng.gen();
        let index = self.index_for(u);
        let grid = &self.eval.dist.grid;
        let mut action = grid.point(index).to_vec();
        if jitter && grid.spacing() > 0.0 {
            let half = 0.5 * grid.spacing();
            for a in action.iter_mut() {
                *a = (*a + rng.gen_range(-half..=half)).clamp(-1.0, 1.0);
            }
        }
        Sample {
            action,
            log_prob: self.eval.grid_log_prob(index),
            index,
        }
    }
}

/// Grid-mass L1 distance `Σ|a − b|`, in `[0, 2]` for normalized inputs.
pub fn l1_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// `KL(a ‖ b)` between two mass vectors on the same grid.
pub fn mass_kl(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .filter(|(x, _)| **x > 0.0)
        .map(|(x, y)| x * (x.ln() - y.ln()))
        .sum())
}

/// Max-shifted log-sum-exp.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn clamp_to_box(action: &[f64]) -> Vec<f64> {
    if action.iter().any(|a| a.abs() > 1.0) {
        log::warn!("action {action:?} outside [-1, 1]; clamping");
    }
    action.iter().map(|a| a.clamp(-1.0, 1.0)).collect()
}
