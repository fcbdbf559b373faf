//! Trapezoidal quadrature on `[-1, 1]^dim`.
//!
//! Weights live in log space only; every consumer folds them into a
//! log-sum-exp.

use rand::Rng;

use crate::basis::{ExponentSet, FeatureKind};
use crate::error::{Error, Result};

pub const DEFAULT_GRID_SIZE: usize = 64;
pub const DEFAULT_FULL_GRID_MAX_DIM: usize = 3;
pub const DEFAULT_STOCHASTIC_GRID_SIZE: usize = 4096;

/// Uniform trapezoid rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    nodes: Vec<f64>,
    log_weights: Vec<f64>,
}

impl Grid1D {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Distance between neighbouring nodes.
    pub fn spacing(&self) -> f64 {
        2.0 / (self.nodes.len() - 1) as f64
    }
}

pub fn trapezoid_grid(grid_size: usize) -> Result<Grid1D> {
    if grid_size < 2 {
        return Err(Error::GridTooSmall(grid_size));
    }
    let h = 2.0 / (grid_size - 1) as f64;
    let nodes: Vec<f64> = (0..grid_size)
        .map(|i| {
            if i == grid_size - 1 {
                1.0
            } else {
                -1.0 + h * i as f64
            }
        })
        .collect();
    let log_weights = (0..grid_size)
        .map(|i| {
            if i == 0 || i == grid_size - 1 {
                (0.5 * h).ln()
            } else {
                h.ln()
            }
        })
        .collect();
    Ok(Grid1D { nodes, log_weights })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// Full tensor product of the 1D nodes.
    Full,
    /// Nodes drawn with replacement from the tensor lattice.
    Stochastic,
    /// Points drawn uniformly from the continuous box.
    StochasticContinuous,
}

/// Quadrature points in `[-1, 1]^dim` with one log-weight per point.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductGrid {
    dim: usize,
    points: Vec<f64>,
    log_weights: Vec<f64>,
    kind: GridKind,
    spacing: f64,
    nodes_per_axis: usize,
}

impl ProductGrid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.points[index * self.dim..(index + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Node spacing of the underlying 1D rule (one quadrature cell width).
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    /// `Σ exp(log_weights)`, the grid's estimate of the box volume `2^dim`.
    pub fn total_weight(&self) -> f64 {
        self.log_weights.iter().map(|w| w.exp()).sum()
    }
}

/// Full tensor-product grid. Point `i` enumerates coordinates with the first
/// axis varying slowest.
pub fn product_grid(g: &Grid1D, dim: usize) -> Result<ProductGrid> {
    product_grid_capped(g, dim, DEFAULT_FULL_GRID_MAX_DIM)
}

pub fn product_grid_capped(g: &Grid1D, dim: usize, max_dim: usize) -> Result<ProductGrid> {
    if dim == 0 {
        return Err(Error::ZeroDimension);
    }
    if dim > max_dim {
        return Err(Error::GridDimensionTooLarge { dim, max: max_dim });
    }
    let n = g.len();
    let count = n.pow(dim as u32);
    let mut points = Vec::with_capacity(count * dim);
    let mut log_weights = Vec::with_capacity(count);
    let mut idx = vec![0usize; dim];
    for _ in 0..count {
        points.extend(idx.iter().map(|&i| g.nodes[i]));
        log_weights.push(idx.iter().map(|&i| g.log_weights[i]).sum());
        for slot in idx.iter_mut().rev() {
            *slot += 1;
            if *slot < n {
                break;
            }
            *slot = 0;
        }
    }
    Ok(ProductGrid {
        dim,
        points,
        log_weights,
        kind: GridKind::Full,
        spacing: g.spacing(),
        nodes_per_axis: n,
    })
}

/// Monte Carlo grid of `sample_size` lattice nodes drawn with replacement.
///
/// Each point keeps its tensor weight plus `dim·ln(n) − ln(sample_size)`, so
/// the summed weights are an unbiased estimate of `2^dim`.
pub fn stochastic_grid<R: Rng + ?Sized>(
    g: &Grid1D,
    dim: usize,
    sample_size: usize,
    rng: &mut R,
) -> Result<ProductGrid> {
    if dim == 0 {
        return Err(Error::ZeroDimension);
    }
    if sample_size == 0 {
        return Err(Error::Empty("stochastic grid sample size"));
    }
    let n = g.len();
    let correction = dim as f64 * (n as f64).ln() - (sample_size as f64).ln();
    let mut points = Vec::with_capacity(sample_size * dim);
    let mut log_weights = Vec::with_capacity(sample_size);
    for _ in 0..sample_size {
        let mut lw = correction;
        for _ in 0..dim {
            let i = rng.gen_range(0..n);
            points.push(g.nodes[i]);
            lw += g.log_weights[i];
        }
        log_weights.push(lw);
    }
    Ok(ProductGrid {
        dim,
        points,
        log_weights,
        kind: GridKind::Stochastic,
        spacing: g.spacing(),
        nodes_per_axis: n,
    })
}

/// Plain Monte Carlo variant: points uniform on the box, each weighted
/// `2^dim / sample_size`.
pub fn stochastic_continuous_grid<R: Rng + ?Sized>(
    dim: usize,
    sample_size: usize,
    rng: &mut R,
) -> Result<ProductGrid> {
    if dim == 0 {
        return Err(Error::ZeroDimension);
    }
    if sample_size == 0 {
        return Err(Error::Empty("stochastic grid sample size"));
    }
    let lw = dim as f64 * 2f64.ln() - (sample_size as f64).ln();
    let points = (0..sample_size * dim)
        .map(|_| rng.gen_range(-1.0..=1.0))
        .collect();
    Ok(ProductGrid {
        dim,
        points,
        log_weights: vec![lw; sample_size],
        kind: GridKind::StochasticContinuous,
        spacing: 0.0,
        nodes_per_axis: 0,
    })
}

/// Feature rows evaluated at every grid point, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl FeatureTable {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// `out[i] = ⟨row_i, coeffs⟩`.
    pub fn mat_vec(&self, coeffs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(coeffs.len(), self.cols);
        for (o, row) in out.iter_mut().zip(self.iter_rows()) {
            *o = dot(row, coeffs);
        }
    }

    /// `out = Σ_i weights[i] · row_i`.
    pub fn weighted_column_sums(&self, weights: &[f64], out: &mut [f64]) {
        debug_assert_eq!(weights.len(), self.rows);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&w, row) in weights.iter().zip(self.iter_rows()) {
            if w == 0.0 {
                continue;
            }
            for (o, &v) in out.iter_mut().zip(row) {
                *o += w * v;
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Legendre feature table of `basis` over `grid`.
pub fn precompute_features(grid: &ProductGrid, basis: &ExponentSet) -> Result<FeatureTable> {
    precompute_features_kind(grid, basis, FeatureKind::Legendre)
}

pub fn precompute_features_kind(
    grid: &ProductGrid,
    basis: &ExponentSet,
    kind: FeatureKind,
) -> Result<FeatureTable> {
    if basis.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            actual: basis.dim(),
        });
    }
    let cols = basis.len();
    let mut values = vec![0.0; grid.len() * cols];
    let fill = |(row, point): (&mut [f64], &[f64])| {
        basis
            .features_into(point, kind, row)
            .expect("grid point and basis dimensions already checked");
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        values
            .par_chunks_exact_mut(cols)
            .zip(grid.points.par_chunks_exact(grid.dim))
            .for_each(fill);
    }
    #[cfg(not(feature = "parallel"))]
    values
        .chunks_exact_mut(cols)
        .zip(grid.points.chunks_exact(grid.dim))
        .for_each(fill);
    Ok(FeatureTable {
        rows: grid.len(),
        cols,
        values,
    })
}
