//! The demo's computations, free of any browser types so they can be tested
//! natively.

use mepoly::env::{make_manifold, BanditEnv, ManifoldKind, DEFAULT_SIGMA};
use mepoly::fit::{boltzmann_target, fit_moments, FitConfig, GridDensity};
use mepoly::io::{to_gray, DensityDump};
use mepoly::{l1_distance, NaturalParams, PolyDistribution, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Points on the target curve that define the manifold reward.
const TARGET_POINTS: usize = 1000;

/// A 1D density for the given non-constant coefficients `λ_1..λ_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub xs: Vec<f64>,
    pub density: Vec<f64>,
    pub log_partition: f64,
    pub entropy: f64,
    pub mean: f64,
}

pub fn curve(coefficients: &[f64], grid_size: usize) -> Result<Curve> {
    let dist = PolyDistribution::full(1, coefficients.len(), grid_size)?;
    let mut lambda = vec![0.0];
    lambda.extend_from_slice(coefficients);
    let params = dist.clip_params(&lambda)?;
    let eval = dist.eval(&params)?;
    let dump = DensityDump::new(&dist, &params)?;
    Ok(Curve {
        xs: dump.nodes,
        density: dump.density,
        log_partition: eval.log_partition(),
        entropy: eval.entropy(),
        mean: eval.expected_action()[0],
    })
}

/// Row-major gray pixels of a square grid field, `y = +1` in the top row.
fn square_image(n: usize, values: &[f64]) -> Vec<u8> {
    let gray = to_gray(values);
    let mut pixels = vec![0u8; n * n];
    for row in 0..n {
        for col in 0..n {
            pixels[row * n + col] = gray[col * n + (n - 1 - row)];
        }
    }
    pixels
}

/// Maximum-entropy fit of a manifold's Boltzmann target at one order.
#[derive(Debug, Clone)]
pub struct ManifoldFit {
    dist: PolyDistribution,
    params: NaturalParams,
    target: GridDensity,
    pub grid_size: usize,
    pub l1: f64,
    pub kl: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ManifoldFit {
    pub fn new(manifold: &str, order: usize, grid_size: usize, alpha: f64, seed: u64) -> Result<Self> {
        let kind: ManifoldKind = manifold.parse()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env = BanditEnv::new(make_manifold(kind, TARGET_POINTS, &mut rng), DEFAULT_SIGMA, alpha)?;
        let dist = PolyDistribution::full(2, order, grid_size)?;
        let target = boltzmann_target(|p| env.step(p), dist.grid(), alpha)?;
        let fit = fit_moments(&target.moments(&dist)?, &dist, &FitConfig::default())?;
        let eval = dist.eval(&fit.params)?;
        let l1 = l1_distance(target.masses(), eval.masses())?;
        let kl = eval.kl_from(target.masses())?;
        Ok(Self {
            params: fit.params,
            target,
            grid_size,
            l1,
            kl,
            iterations: fit.report.iterations,
            converged: fit.report.converged,
            dist,
        })
    }

    pub fn num_features(&self) -> usize {
        self.dist.num_features()
    }

    pub fn fitted_pixels(&self) -> Result<Vec<u8>> {
        let dump = DensityDump::new(&self.dist, &self.params)?;
        Ok(square_image(self.grid_size, &dump.density))
    }

    pub fn target_pixels(&self) -> Vec<u8> {
        let density: Vec<f64> = self
            .target
            .masses()
            .iter()
            .zip(self.dist.grid().log_weights())
            .map(|(m, lw)| m / lw.exp())
            .collect();
        square_image(self.grid_size, &density)
    }

    /// `n` draws from the fit, flattened as `x0, y0, x1, y1, ...`.
    pub fn sample(&self, n: usize, seed: u64, jitter: bool) -> Result<Vec<f64>> {
        let eval = self.dist.eval(&self.params)?;
        let sampler = eval.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n).flat_map(|_| sampler.sample(&mut rng, jitter).action).collect())
    }
}
