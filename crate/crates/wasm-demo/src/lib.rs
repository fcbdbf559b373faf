//! Browser bindings for the static demo page in `www/`.
//!
//! Three operations: explore a 1D density by its coefficients, fit a 2D
//! manifold target at a chosen order, and draw samples from that fit.

pub mod demo;

use wasm_bindgen::prelude::*;

fn js_err(e: mepoly::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Curve(demo::Curve);

#[wasm_bindgen]
impl Curve {
    #[wasm_bindgen(getter)]
    pub fn xs(&self) -> Vec<f64> {
        self.0.xs.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn density(&self) -> Vec<f64> {
        self.0.density.clone()
    }

    #[wasm_bindgen(getter, js_name = logPartition)]
    pub fn log_partition(&self) -> f64 {
        self.0.log_partition
    }

    #[wasm_bindgen(getter)]
    pub fn entropy(&self) -> f64 {
        self.0.entropy
    }

    #[wasm_bindgen(getter)]
    pub fn mean(&self) -> f64 {
        self.0.mean
    }
}

/// Density on `[-1, 1]` for coefficients `λ_1..λ_K` (the constant is implied).
#[wasm_bindgen(js_name = densityCurve)]
pub fn density_curve(coefficients: &[f64], grid_size: usize) -> Result<Curve, JsError> {
    demo::curve(coefficients, grid_size).map(Curve).map_err(js_err)
}

#[wasm_bindgen]
pub struct ManifoldFit(demo::ManifoldFit);

#[wasm_bindgen]
impl ManifoldFit {
    #[wasm_bindgen(constructor)]
    pub fn new(manifold: &str, order: usize, grid_size: usize, alpha: f64, seed: u64) -> Result<ManifoldFit, JsError> {
        demo::ManifoldFit::new(manifold, order, grid_size, alpha, seed)
            .map(ManifoldFit)
            .map_err(js_err)
    }

    #[wasm_bindgen(getter, js_name = gridSize)]
    pub fn grid_size(&self) -> usize {
        self.0.grid_size
    }

    #[wasm_bindgen(getter)]
    pub fn l1(&self) -> f64 {
        self.0.l1
    }

    #[wasm_bindgen(getter)]
    pub fn kl(&self) -> f64 {
        self.0.kl
    }

    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.0.iterations
    }

    #[wasm_bindgen(getter)]
    pub fn converged(&self) -> bool {
        self.0.converged
    }

    #[wasm_bindgen(getter, js_name = numFeatures)]
    pub fn num_features(&self) -> usize {
        self.0.num_features()
    }

    /// Gray pixels of the fitted density, row-major, `y = +1` on top.
    #[wasm_bindgen(js_name = fittedPixels)]
    pub fn fitted_pixels(&self) -> Result<Vec<u8>, JsError> {
        self.0.fitted_pixels().map_err(js_err)
    }

    #[wasm_bindgen(js_name = targetPixels)]
    pub fn target_pixels(&self) -> Vec<u8> {
        self.0.target_pixels()
    }

    /// Samples flattened as `x0, y0, x1, y1, ...`.
    pub fn sample(&self, n: usize, seed: u64, jitter: bool) -> Result<Vec<f64>, JsError> {
        self.0.sample(n, seed, jitter).map_err(js_err)
    }
}
