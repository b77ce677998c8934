//! Browser bindings for three operations of the surface-wave toolkit: prior
//! draws, fundamental-mode dispersion curves and finite-difference kernels.
//!
//! Every binding is a thin wrapper over a plain Rust function in this crate,
//! so the logic is testable on the host without a JavaScript runtime.

use wasm_bindgen::prelude::*;

use swkernel::dispersion::{phase_velocity, PeriodGrid, Wave};
use swkernel::earth_model::{sample_model, standard_depth_grid, LayeredModel, PriorConfig, PriorKind};
use swkernel::kernels::{fd_kernel, DEFAULT_EPSILON};
use swkernel::rng;

/// Periods (s) of the standard 40-point grid.
pub fn period_grid() -> Vec<f64> {
    PeriodGrid::standard().periods().to_vec()
}

/// Layer top depths (km) of the standard 38-layer grid.
pub fn layer_tops() -> Vec<f64> {
    standard_depth_grid().layer_top_depths()
}

fn model(vs: &[f64]) -> Result<LayeredModel, String> {
    LayeredModel::from_model_vector(&standard_depth_grid(), vs).map_err(|e| e.to_string())
}

/// One Vs profile (38 values) drawn from the named prior.
pub fn prior_draw(kind: &str, seed: u32) -> Result<Vec<f64>, String> {
    let kind: PriorKind = kind.parse().map_err(|e: swkernel::Error| e.to_string())?;
    let mut r = rng::stream(u64::from(seed), rng::purpose::MODEL, 0);
    sample_model(&mut r, &standard_depth_grid(), &PriorConfig::for_kind(kind)).map(|m| m.vs()).map_err(|e| e.to_string())
}

/// Phase velocity at every standard period; NaN where the mode has no root.
pub fn curve(vs: &[f64], wave: &str) -> Result<Vec<f64>, String> {
    let wave: Wave = wave.parse().map_err(|e: swkernel::Error| e.to_string())?;
    let m = model(vs)?;
    Ok(period_grid().iter().map(|&t| phase_velocity(&m, t, wave).unwrap_or(f64::NAN)).collect())
}

/// Thickness-normalized kernel at one period, one value per layer.
pub fn kernel(vs: &[f64], wave: &str, period: f64) -> Result<Vec<f64>, String> {
    let wave: Wave = wave.parse().map_err(|e: swkernel::Error| e.to_string())?;
    fd_kernel(&model(vs)?, period, wave, DEFAULT_EPSILON).map(|k| k.values).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = periodGrid)]
pub fn js_period_grid() -> Vec<f64> {
    period_grid()
}

#[wasm_bindgen(js_name = layerTops)]
pub fn js_layer_tops() -> Vec<f64> {
    layer_tops()
}

#[wasm_bindgen(js_name = samplePrior)]
pub fn js_sample_prior(kind: &str, seed: u32) -> Result<Vec<f64>, JsError> {
    prior_draw(kind, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = dispersionCurve)]
pub fn js_dispersion_curve(vs: &[f64], wave: &str) -> Result<Vec<f64>, JsError> {
    curve(vs, wave).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = sensitivityKernel)]
pub fn js_sensitivity_kernel(vs: &[f64], wave: &str, period: f64) -> Result<Vec<f64>, JsError> {
    kernel(vs, wave, period).map_err(|e| JsError::new(&e))
}
