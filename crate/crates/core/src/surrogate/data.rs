//! Training samples, observation masks and normalization statistics.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dispersion::PeriodGrid;
use crate::earth_model::DepthGrid;
use crate::error::{shape, Error, Result};

/// Minimum number of observed channels in any mask.
pub const MIN_OBSERVED: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedSample {
    /// Layer Vs values; the half-space shares the deepest value.
    pub model_vector: Vec<f64>,
    /// Rayleigh phase velocities for every period, then Love.
    pub target: Vec<f64>,
    pub mask: Vec<bool>,
}

impl MaskedSample {
    pub fn observed(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// Samples together with the grids that give their vectors meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub depth_grid: DepthGrid,
    pub periods: PeriodGrid,
    pub samples: Vec<MaskedSample>,
}

impl Dataset {
    pub fn input_dim(&self) -> usize {
        self.depth_grid.len()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.periods.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (n_in, n_out) = (self.input_dim(), self.output_dim());
        for (i, s) in self.samples.iter().enumerate() {
            if s.model_vector.len() != n_in || s.target.len() != n_out || s.mask.len() != n_out {
                return Err(shape(format!("sample {i} does not match a {n_in} -> {n_out} layout")));
            }
            if s.observed() < MIN_OBSERVED {
                return Err(Error::Domain(format!("sample {i} has fewer than {MIN_OBSERVED} observed channels")));
            }
            if s.model_vector.iter().chain(&s.target).any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("sample {i} has non-finite values")));
            }
        }
        Ok(())
    }

    /// SHA-256 over grids, values (as IEEE bits) and masks, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |v: f64| h.update(v.to_bits().to_le_bytes());
        for &t in self.depth_grid.thicknesses() {
            put(t);
        }
        for &t in self.periods.periods() {
            put(t);
        }
        for s in &self.samples {
            s.model_vector.iter().chain(&s.target).for_each(|&v| put(v));
        }
        for s in &self.samples {
            h.update(s.mask.iter().map(|&m| m as u8).collect::<Vec<_>>());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskPolicy {
    /// Probability of removing one whole branch (Rayleigh or Love, equal odds).
    pub branch_drop_prob: f64,
    /// Probability of masking one contiguous period interval.
    pub interval_prob: f64,
    /// Fraction of periods covered by the masked interval, drawn uniformly.
    pub interval_fraction: (f64, f64),
}

impl Default for MaskPolicy {
    fn default() -> Self {
        Self { branch_drop_prob: 0.3, interval_prob: 0.5, interval_fraction: (0.1, 0.5) }
    }
}

impl MaskPolicy {
    pub fn none() -> Self {
        Self { branch_drop_prob: 0.0, interval_prob: 0.0, interval_fraction: (0.1, 0.5) }
    }

    pub fn validate(&self) -> Result<()> {
        let p = |x: f64| (0.0..=1.0).contains(&x);
        let (lo, hi) = self.interval_fraction;
        if !(p(self.branch_drop_prob) && p(self.interval_prob) && 0.0 <= lo && lo <= hi && hi < 1.0) {
            return Err(Error::Config("mask policy probabilities out of range".into()));
        }
        Ok(())
    }
}

/// Observation mask over `2 * n_periods` channels (Rayleigh block, then Love).
pub fn sample_mask<R: Rng + ?Sized>(rng: &mut R, policy: &MaskPolicy, n_periods: usize) -> Vec<bool> {
    loop {
        let mut mask = vec![true; 2 * n_periods];
        if rng.random::<f64>() < policy.branch_drop_prob {
            let branch = rng.random_range(0..2usize);
            mask[branch * n_periods..(branch + 1) * n_periods].fill(false);
        }
        if rng.random::<f64>() < policy.interval_prob {
            let (lo, hi) = policy.interval_fraction;
            let frac = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let width = ((frac * n_periods as f64).round() as usize).clamp(1, n_periods);
            let start = rng.random_range(0..=n_periods - width);
            for branch in 0..2 {
                mask[branch * n_periods + start..branch * n_periods + start + width].fill(false);
            }
        }
        if mask.iter().filter(|m| **m).count() >= MIN_OBSERVED.min(2 * n_periods) {
            return mask;
        }
    }
}

/// Per-channel affine standardization of inputs and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub input_mean: Vec<f64>,
    pub input_sd: Vec<f64>,
    pub output_mean: Vec<f64>,
    pub output_sd: Vec<f64>,
}

fn mean_sd(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = values.collect();
    let n = v.len();
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt(), n)
}

impl Normalizer {
    /// Statistics over `samples`; output statistics use observed entries only.
    pub fn fit(samples: &[MaskedSample]) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::Normalization("no samples".into()))?;
        let (n_in, n_out) = (first.model_vector.len(), first.target.len());
        let mut out = Self {
            input_mean: Vec::with_capacity(n_in),
            input_sd: Vec::with_capacity(n_in),
            output_mean: Vec::with_capacity(n_out),
            output_sd: Vec::with_capacity(n_out),
        };
        for i in 0..n_in {
            let (m, s, _) = mean_sd(samples.iter().map(|x| x.model_vector[i]));
            if !(s > 0.0) {
                return Err(Error::Normalization(format!("input channel {i} has zero variance")));
            }
            out.input_mean.push(m);
            out.input_sd.push(s);
        }
        for k in 0..n_out {
            let (m, s, n) = mean_sd(samples.iter().filter(|x| x.mask[k]).map(|x| x.target[k]));
            if n < 2 || !(s > 0.0) {
                return Err(Error::Normalization(format!("output channel {k} has zero variance")));
            }
            out.output_mean.push(m);
            out.output_sd.push(s);
        }
        Ok(out)
    }

    pub fn identity(n_in: usize, n_out: usize) -> Self {
        Self {
            input_mean: vec![0.0; n_in],
            input_sd: vec![1.0; n_in],
            output_mean: vec![0.0; n_out],
            output_sd: vec![1.0; n_out],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_mean.len() != self.input_sd.len() || self.output_mean.len() != self.output_sd.len() {
            return Err(shape("normalizer mean/sd lengths differ"));
        }
        if self.input_sd.iter().chain(&self.output_sd).any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Normalization("normalizer sd must be positive".into()));
        }
        Ok(())
    }

    pub fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.input_mean).zip(&self.input_sd).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn denormalize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.input_mean).zip(&self.input_sd).map(|((v, m), s)| v * s + m).collect()
    }

    pub fn normalize_output(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.output_mean).zip(&self.output_sd).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn denormalize_output(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.output_mean).zip(&self.output_sd).map(|((v, m), s)| v * s + m).collect()
    }
}
