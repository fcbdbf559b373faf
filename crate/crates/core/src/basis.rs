//! Multi-index polynomial bases on `[-1, 1]^dim`.
//!
//! A basis of dimension `dim` and order `K` holds every exponent vector `α`
//! with `Σ α_i ≤ K`. Each exponent maps to one feature, either the tensor
//! Legendre product `Π P_{α_i}(x_i)` or the plain monomial `Π x_i^{α_i}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default ceiling on the number of features a basis may hold.
pub const DEFAULT_MAX_FEATURES: usize = 20_000;

/// Polynomial family used to turn an exponent vector into a feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    #[default]
    Legendre,
    Monomial,
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "legendre" => Ok(FeatureKind::Legendre),
            "monomial" => Ok(FeatureKind::Monomial),
            other => Err(Error::InvalidArgument(format!(
                "unknown feature kind {other:?} (expected legendre or monomial)"
            ))),
        }
    }
}

/// Ordered set of exponent vectors with total degree at most `order`.
///
/// Exponents are stored flat, `dim` entries per feature, in lexicographic
/// order of the degree tuples (the all-zero exponent comes first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExponentSet {
    dim: usize,
    order: usize,
    exponents: Vec<u32>,
}

/// Number of exponent vectors of dimension `dim` with total degree at most
/// `order`, i.e. `C(dim + order, dim)`, subject to [`DEFAULT_MAX_FEATURES`].
pub fn feature_count(dim: usize, order: usize) -> Result<usize> {
    feature_count_capped(dim, order, DEFAULT_MAX_FEATURES)
}

pub fn feature_count_capped(dim: usize, order: usize, cap: usize) -> Result<usize> {
    if dim == 0 {
        return Err(Error::ZeroDimension);
    }
    // C(dim + order, order) built up as a running product; each partial
    // product is itself a binomial coefficient so the division is exact.
    let mut count: u128 = 1;
    for i in 1..=order as u128 {
        count = count
            .checked_mul(dim as u128 + i)
            .map(|c| c / i)
            .filter(|&c| c <= cap as u128)
            .ok_or(Error::TooManyFeatures {
                dim,
                order,
                count: u128::MAX,
                cap,
            })?;
    }
    if count > cap as u128 {
        return Err(Error::TooManyFeatures {
            dim,
            order,
            count,
            cap,
        });
    }
    Ok(count as usize)
}

/// Enumerate every exponent vector of total degree `<= order`.
pub fn enumerate_exponents(dim: usize, order: usize) -> Result<ExponentSet> {
    ExponentSet::with_cap(dim, order, DEFAULT_MAX_FEATURES)
}

impl ExponentSet {
    pub fn new(dim: usize, order: usize) -> Result<Self> {
        Self::with_cap(dim, order, DEFAULT_MAX_FEATURES)
    }

    pub fn with_cap(dim: usize, order: usize, cap: usize) -> Result<Self> {
        let count = feature_count_capped(dim, order, cap)?;
        let mut exponents = Vec::with_capacity(count * dim);
        let mut current = vec![0u32; dim];
        let order = order as u32;
        // Odometer over the degree tuples, last coordinate fastest, pruning
        // any tuple whose total exceeds the order.
        loop {
            exponents.extend_from_slice(&current);
            let mut pos = dim;
            loop {
                if pos == 0 {
                    debug_assert_eq!(exponents.len(), count * dim);
                    return Ok(Self {
                        dim,
                        order: order as usize,
                        exponents,
                    });
                }
                pos -= 1;
                current[pos] += 1;
                if current.iter().sum::<u32>() <= order {
                    break;
                }
                current[pos] = 0;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of features `M`.
    pub fn len(&self) -> usize {
        self.exponents.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn get(&self, index: usize) -> &[u32] {
        &self.exponents[index * self.dim..(index + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.exponents.chunks_exact(self.dim)
    }

    /// Position of an exponent vector in the canonical ordering.
    pub fn index_of(&self, exponent: &[u32]) -> Option<usize> {
        if exponent.len() != self.dim {
            return None;
        }
        self.iter().position(|e| e == exponent)
    }

    pub fn total_degree(&self, index: usize) -> u32 {
        self.get(index).iter().sum()
    }

    /// Feature vector of `point` under this basis.
    pub fn features(&self, point: &[f64], kind: FeatureKind) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.features_into(point, kind, &mut out)?;
        Ok(out)
    }

    /// Writes the feature vector of `point` into `out` (length `M`).
    pub fn features_into(&self, point: &[f64], kind: FeatureKind, out: &mut [f64]) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: point.len(),
            });
        }
        if out.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: out.len(),
            });
        }
        let stride = self.order + 1;
        let mut table = vec![0.0; self.dim * stride];
        for (row, &x) in table.chunks_exact_mut(stride).zip(point) {
            match kind {
                FeatureKind::Legendre => legendre_into(x, row),
                FeatureKind::Monomial => powers_into(x, row),
            }
        }
        for (value, exponent) in out.iter_mut().zip(self.iter()) {
            *value = exponent
                .iter()
                .enumerate()
                .map(|(axis, &deg)| table[axis * stride + deg as usize])
                .product();
        }
        Ok(())
    }
}

/// Free-function form of [`ExponentSet::features`].
pub fn features(point: &[f64], basis: &ExponentSet, kind: FeatureKind) -> Result<Vec<f64>> {
    basis.features(point, kind)
}

/// `[P_0(x), ..., P_max_order(x)]` by the three-term Legendre recurrence.
pub fn legendre_table(x: f64, max_order: usize) -> Vec<f64> {
    let mut out = vec![0.0; max_order + 1];
    legendre_into(x, &mut out);
    out
}

/// Fills `out[n] = P_n(x)` for `n < out.len()`.
pub fn legendre_into(x: f64, out: &mut [f64]) {
    debug_assert!(
        x.abs() <= 1.0 + 1e-9,
        "legendre evaluated outside [-1, 1]: {x}"
    );
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for n in 2..out.len() {
        let nf = n as f64;
        out[n] = ((2.0 * nf - 1.0) / nf) * x * out[n - 1] - ((nf - 1.0) / nf) * out[n - 2];
    }
}

fn powers_into(x: f64, out: &mut [f64]) {
    let mut acc = 1.0;
    for slot in out.iter_mut() {
        *slot = acc;
        acc *= x;
    }
}
