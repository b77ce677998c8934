//! Synthetic training-set generation: prior draws, solver curves, masks.
//!
//! Sample `i` draws its model from stream `(seed, MODEL, i)` and its mask from
//! `(seed, MASK, i)`. A draw that has no fundamental-mode root at some period
//! is discarded and the same stream draws again, so rejections never shift
//! other samples.

use crate::dispersion::{dispersion_curve, PeriodGrid, Wave};
use crate::earth_model::{sample_model, DepthGrid, EnsembleRecord, LayeredModel, PriorConfig};
use crate::error::{Error, Result};
use crate::rng;
use crate::surrogate::{sample_mask, Dataset, MaskPolicy, MaskedSample};

const MAX_REJECTIONS_PER_SAMPLE: usize = 1000;

#[derive(Debug, Clone)]
pub struct GeneratedSample {
    pub model: LayeredModel,
    /// Rayleigh then Love phase velocities (km/s), all periods.
    pub velocities: Vec<f64>,
    pub mask: Vec<bool>,
    pub rejected: usize,
}

/// Stacked Rayleigh and Love curves of `model`.
pub fn model_velocities(model: &LayeredModel, periods: &PeriodGrid) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * periods.len());
    for wave in Wave::BOTH {
        out.extend(dispersion_curve(model, periods, wave)?.phase_velocity);
    }
    Ok(out)
}

pub fn generate_sample(
    seed: u64,
    index: u64,
    grid: &DepthGrid,
    periods: &PeriodGrid,
    prior: &PriorConfig,
    policy: &MaskPolicy,
) -> Result<GeneratedSample> {
    let mut model_rng = rng::stream(seed, rng::purpose::MODEL, index);
    for rejected in 0..MAX_REJECTIONS_PER_SAMPLE {
        let model = sample_model(&mut model_rng, grid, prior)?;
        match model_velocities(&model, periods) {
            Ok(velocities) => {
                let mask = sample_mask(&mut rng::stream(seed, rng::purpose::MASK, index), policy, periods.len());
                return Ok(GeneratedSample { model, velocities, mask, rejected });
            }
            Err(Error::NoRoot { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Numerical(format!("sample {index}: every draw was rejected")))
}

/// Samples `0..count` in index order, optionally spread over `threads` workers.
pub fn generate_samples(
    seed: u64,
    count: usize,
    grid: &DepthGrid,
    periods: &PeriodGrid,
    prior: &PriorConfig,
    policy: &MaskPolicy,
    threads: usize,
) -> Result<Vec<GeneratedSample>> {
    crate::parallel::map_indexed(count, threads, |i| generate_sample(seed, i as u64, grid, periods, prior, policy))
}

pub fn to_dataset(samples: &[GeneratedSample], grid: &DepthGrid, periods: &PeriodGrid) -> Dataset {
    Dataset {
        depth_grid: grid.clone(),
        periods: periods.clone(),
        samples: samples
            .iter()
            .map(|s| MaskedSample { model_vector: s.model.vs(), target: s.velocities.clone(), mask: s.mask.clone() })
            .collect(),
    }
}

pub fn to_records(samples: &[GeneratedSample], seed: u64, prior: &PriorConfig) -> Vec<EnsembleRecord> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| EnsembleRecord::from_model(rng::stream_seed(seed, rng::purpose::MODEL, i as u64), prior.kind, &s.model))
        .collect()
}
