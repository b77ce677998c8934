//! Reference sensitivity kernels by centered finite differences on the solver.
//!
//! Each layer's Vs is perturbed by `±epsilon` with Vp and density following
//! through the coupling, so the kernel is the total derivative along the
//! one-parameter-per-layer model space the surrogate sees. Perturbing the
//! deepest layer also moves the half-space. Raw derivatives are divided by
//! layer thickness to give a density in depth (km/s per km/s per km).

use std::io::Write;

use serde::Serialize;

use crate::dispersion::{csv_err, phase_velocity, phase_velocity_near, PeriodGrid, Wave};
use crate::earth_model::{DepthGrid, LayeredModel};
use crate::error::{domain, Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityKernel {
    pub wave: Wave,
    pub period: f64,
    /// Thickness-normalized derivative per layer.
    pub values: Vec<f64>,
    pub grid: DepthGrid,
}

impl SensitivityKernel {
    /// Raw derivative `dc/dVs_i` (values times layer thickness).
    pub fn raw(&self) -> Vec<f64> {
        self.values.iter().zip(self.grid.thicknesses()).map(|(v, h)| v * h).collect()
    }

    /// Top depth of the layer with the largest |value|.
    pub fn peak_depth(&self) -> f64 {
        let i = argmax_abs(&self.values);
        self.grid.layer_top_depths()[i]
    }
}

pub(crate) fn argmax_abs(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) })
        .0
}

pub fn fd_kernel(model: &LayeredModel, period: f64, wave: Wave, epsilon: f64) -> Result<SensitivityKernel> {
    if !(1e-4..=1e-2).contains(&epsilon) {
        return Err(domain(format!("finite-difference step {epsilon} outside [1e-4, 1e-2] km/s")));
    }
    let wrap = |layer: usize| move |e: Error| Error::KernelEvaluation { period_index: 0, layer, source: Box::new(e) };
    let base = phase_velocity(model, period, wave).map_err(wrap(0))?;
    let radius = 4.0 * epsilon;
    let thicknesses = model.grid().thicknesses();
    let mut values = Vec::with_capacity(thicknesses.len());
    for (i, &h) in thicknesses.iter().enumerate() {
        let plus = model.perturbed(i, epsilon);
        let minus = model.perturbed(i, -epsilon);
        let c_plus = phase_velocity_near(&plus, period, wave, base, radius).map_err(wrap(i))?;
        let c_minus = phase_velocity_near(&minus, period, wave, base, radius).map_err(wrap(i))?;
        values.push((c_plus - c_minus) / (2.0 * epsilon * h));
    }
    Ok(SensitivityKernel { wave, period, values, grid: model.grid().clone() })
}

/// Kernels for every period of `periods`, rows ordered by period.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub wave: Wave,
    pub rows: Vec<SensitivityKernel>,
}

impl KernelMatrix {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.rows.first().map_or(0, |r| r.values.len()))
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.values.clone()).collect()
    }

    pub fn periods(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.period).collect()
    }
}

pub fn kernel_matrix(model: &LayeredModel, periods: &PeriodGrid, wave: Wave) -> Result<KernelMatrix> {
    kernel_matrix_with_epsilon(model, periods, wave, DEFAULT_EPSILON)
}

pub fn kernel_matrix_with_epsilon(
    model: &LayeredModel,
    periods: &PeriodGrid,
    wave: Wave,
    epsilon: f64,
) -> Result<KernelMatrix> {
    let rows = periods
        .periods()
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            fd_kernel(model, t, wave, epsilon).map_err(|e| match e {
                Error::KernelEvaluation { layer, source, .. } => Error::KernelEvaluation { period_index: k, layer, source },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KernelMatrix { wave, rows })
}

#[derive(Serialize)]
struct KernelRow {
    wave: Wave,
    period_s: f64,
    layer_index: usize,
    layer_top_km: f64,
    kernel_value: f64,
}

/// Writes kernel matrices with columns `wave,period_s,layer_index,layer_top_km,kernel_value`.
pub fn write_kernels_csv<W: Write>(out: W, matrices: &[KernelMatrix]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for m in matrices {
        for row in &m.rows {
            let tops = row.grid.layer_top_depths();
            for (i, (&v, &top)) in row.values.iter().zip(&tops).enumerate() {
                w.serialize(KernelRow { wave: row.wave, period_s: row.period, layer_index: i, layer_top_km: top, kernel_value: v })
                    .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::earth_model::standard_depth_grid;

    #[test]
    fn epsilon_range_is_enforced() {
        let m = LayeredModel::homogeneous(standard_depth_grid(), 3.0).unwrap();
        assert!(matches!(fd_kernel(&m, 10.0, Wave::Rayleigh, 1e-5), Err(Error::Domain(_))));
        assert!(matches!(fd_kernel(&m, 10.0, Wave::Rayleigh, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn love_kernel_on_halfspace_fails_with_layer_context() {
        let m = LayeredModel::homogeneous(standard_depth_grid(), 3.0).unwrap();
        let err = fd_kernel(&m, 10.0, Wave::Love, 1e-3).unwrap_err();
        assert!(matches!(err, Error::KernelEvaluation { .. }));
    }

    #[test]
    fn homogeneous_kernel_integrates_to_scaling_constant() {
        let m = LayeredModel::homogeneous(standard_depth_grid(), 3.0).unwrap();
        let k = fd_kernel(&m, 10.0, Wave::Rayleigh, 1e-3).unwrap();
        let total: f64 = k.raw().iter().sum();
        assert!((total - 0.9194).abs() < 1e-2, "total {total}");
    }
}
