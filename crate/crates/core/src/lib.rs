//! Maximum-entropy polynomial distributions on the box `[-1, 1]^d`.
//!
//! The density `π(a) ∝ exp(⟨λ, T(a)⟩)` uses tensor Legendre features `T` and
//! is normalized by trapezoid quadrature, which makes the log-density,
//! entropy, moments and samples exact with respect to the grid.
//!
//! ```
//! use mepoly::fit::{fit_mle, FitConfig};
//! use mepoly::PolyDistribution;
//! use rand::SeedableRng;
//!
//! // order-4 features on a 64×64 grid over [-1, 1]²
//! let dist = PolyDistribution::full(2, 4, 64)?;
//! let lambda: Vec<f64> = (0..dist.num_features()).map(|j| 0.1 * j as f64).collect();
//! let params = dist.clip_params(&lambda)?;
//! let eval = dist.eval(&params)?;
//! println!("A = {:.4}, H = {:.4}", eval.log_partition(), eval.entropy());
//!
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
//! let sampler = eval.sampler();
//! let samples: Vec<Vec<f64>> = (0..5_000).map(|_| sampler.sample(&mut rng, false).action).collect();
//! let fit = fit_mle(&samples, &dist, &FitConfig::default())?;
//! assert!(fit.report.converged);
//! # Ok::<(), mepoly::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod distribution;
pub mod env;
pub mod error;
pub mod fit;
pub mod io;
pub mod nn;
pub mod quadrature;
pub mod rl;

pub use basis::{enumerate_exponents, feature_count, legendre_table, ExponentSet, FeatureKind};
pub use distribution::{l1_distance, GridEval, NaturalParams, PolyDistribution, Sample};
pub use error::{Error, Result};
pub use quadrature::{product_grid, stochastic_grid, trapezoid_grid, Grid1D, ProductGrid};
