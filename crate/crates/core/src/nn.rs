//! Fully-connected conditioner network with hand-written reverse mode.
//!
//! Parameters live in one flat vector: for each layer the row-major
//! `out × in` weight matrix followed by the `out` biases.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: [usize; 2] = [256, 256];

const MAGIC: &[u8; 8] = b"MEPOLYNN";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    /// Bumped on every parameter write so stale caches can be detected.
    generation: u64,
}

/// Activations recorded by [`Mlp::forward_cached`], consumed by
/// [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    /// Input of every layer; `activations[0]` is the network input.
    activations: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    /// Uniform fan-in init `U(−1/√in, 1/√in)`; with `zero_output` the last
    /// layer starts at exactly zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], zero_output: bool, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer sizes {sizes:?}")));
        }
        let mut params = Vec::with_capacity(param_count(sizes));
        let last = sizes.len() - 2;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            if zero_output && l == last {
                params.extend(std::iter::repeat_n(0.0, fan_in * fan_out + fan_out));
            } else {
                params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)));
                params.extend((0..fan_out).map(|_| rng.gen_range(-bound..bound)));
            }
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
            generation: 0,
        })
    }

    /// `[input, hidden.., output]` with the default hidden widths.
    pub fn with_default_hidden<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        zero_output: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let sizes = [input, DEFAULT_HIDDEN[0], DEFAULT_HIDDEN[1], output];
        Self::new(&sizes, zero_output, rng)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer sizes {sizes:?}")));
        }
        if params.len() != param_count(sizes) {
            return Err(Error::DimensionMismatch {
                expected: param_count(sizes),
                actual: params.len(),
            });
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
            generation: 0,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.generation += 1;
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn zero_grads(&self) -> Vec<f64> {
        vec![0.0; self.params.len()]
    }

    /// Offsets of (weights, biases) for layer `l`.
    fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let start: usize = param_count(&self.sizes[..=l]);
        (start, start + self.sizes[l] * self.sizes[l + 1])
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input)?.output)
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.input_size() {
            return Err(Error::DimensionMismatch {
                expected: self.input_size(),
                actual: input.len(),
            });
        }
        let layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(layers);
        let mut x = input.to_vec();
        for l in 0..layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            let weights = &self.params[w_off..w_off + fan_in * fan_out];
            let bias = &self.params[b_off..b_off + fan_out];
            let mut y: Vec<f64> = weights
                .chunks_exact(fan_in)
                .zip(bias)
                .map(|(row, b)| b + row.iter().zip(&x).map(|(w, xi)| w * xi).sum::<f64>())
                .collect();
            if l + 1 < layers {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            activations.push(std::mem::replace(&mut x, y));
        }
        Ok(ForwardCache {
            generation: self.generation,
            activations,
            output: x,
        })
    }

    /// Accumulate `∂(upstream · output)/∂θ` into `grads`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64], grads: &mut [f64]) -> Result<()> {
        if cache.generation != self.generation {
            return Err(Error::InvalidArgument(
                "stale activation cache: parameters changed since the forward pass".into(),
            ));
        }
        if upstream.len() != self.output_size() {
            return Err(Error::DimensionMismatch {
                expected: self.output_size(),
                actual: upstream.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                actual: grads.len(),
            });
        }
        let layers = self.sizes.len() - 1;
        let mut delta = upstream.to_vec();
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            let x = &cache.activations[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grads[b_off + o] += d;
                let row = &mut grads[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            if l == 0 {
                break;
            }
            let weights = &self.params[w_off..w_off + fan_in * fan_out];
            let mut prev = vec![0.0; fan_in];
            for (row, &d) in weights.chunks_exact(fan_in).zip(&delta) {
                if d == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            // ReLU derivative: the recorded input of layer l is the hidden output
            for (p, &a) in prev.iter_mut().zip(x) {
                if a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 4 * self.sizes.len() + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sizes.len() as u32).to_le_bytes());
        for &s in &self.sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version} (expected {VERSION})"
            )));
        }
        let n = read_u32(&mut r)? as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::Format(format!("implausible layer count {n}")));
        }
        let sizes = (0..n)
            .map(|_| read_u32(&mut r).map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        let count = param_count(&sizes);
        if r.len() != count * 8 {
            return Err(Error::Format(format!(
                "payload holds {} bytes, layers {sizes:?} need {}",
                r.len(),
                count * 8
            )));
        }
        let params = r
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_params(&sizes, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Load and require the given layer sizes.
    pub fn load_expecting(path: &Path, sizes: &[usize]) -> Result<Self> {
        let net = Self::load(path)?;
        if net.sizes != sizes {
            return Err(Error::ShapeMismatch {
                expected: sizes.to_vec(),
                found: net.sizes,
            });
        }
        Ok(net)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format("truncated checkpoint".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Adam(W) moment state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update descending `grads`; decoupled weight decay.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        adam_update(
            params,
            grads,
            &mut self.m,
            &mut self.v,
            self.t,
            AdamHyper {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
                weight_decay: self.weight_decay,
            },
        );
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// Stateless Adam update at step `t ≥ 1`.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    h: AdamHyper,
) {
    let bc1 = 1.0 - h.beta1.powi(t as i32);
    let bc2 = 1.0 - h.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= h.lr * (m_hat / (v_hat.sqrt() + h.eps) + h.weight_decay * params[i]);
    }
}
