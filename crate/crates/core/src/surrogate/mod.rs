//! Differentiable neural surrogate of the dispersion forward operator.
//!
//! The network maps a layer Vs vector to stacked Rayleigh and Love phase
//! velocities (`[rayleigh(T_0..T_n), love(T_0..T_n)]`). Gradients of any
//! output with respect to the un-normalized Vs vector come from reverse-mode
//! differentiation through the network and both normalizers; divided by
//! layer thickness they are directly comparable with reference kernels.

mod checkpoint;
mod data;
mod mlp;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, SurrogateCheckpoint, CHECKPOINT_VERSION};
pub use data::{sample_mask, Dataset, MaskPolicy, MaskedSample, Normalizer, MIN_OBSERVED};
pub use mlp::{BatchTape, Mlp};
pub use train::{fit, masked_loss, split_indices, train, EpochLoss, FitOutcome, TrainingConfig};

use crate::dispersion::Wave;
use crate::earth_model::DepthGrid;
use crate::error::{domain, shape, Result};
use crate::kernels::SensitivityKernel;

/// Index of `(wave, period_index)` in the stacked output vector.
pub fn output_index(wave: Wave, period_index: usize, n_periods: usize) -> usize {
    wave.branch_index() * n_periods + period_index
}

/// A network together with the normalization it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub mlp: Mlp,
    pub normalizer: Normalizer,
}

impl Surrogate {
    fn check_input(&self, model_vector: &[f64]) -> Result<()> {
        if model_vector.len() != self.mlp.input_dim() {
            return Err(shape(format!("model vector has {} entries, network expects {}", model_vector.len(), self.mlp.input_dim())));
        }
        if model_vector.iter().any(|v| !v.is_finite()) {
            return Err(domain("model vector contains non-finite values"));
        }
        Ok(())
    }

    /// Predicted phase velocities (km/s).
    pub fn forward(&self, model_vector: &[f64]) -> Result<Vec<f64>> {
        self.check_input(model_vector)?;
        let y = self.mlp.forward(&self.normalizer.normalize_input(model_vector));
        Ok(self.normalizer.denormalize_output(&y))
    }

    /// Exact gradient of output `output_index` with respect to the raw Vs vector.
    pub fn backward_gradient(&self, model_vector: &[f64], output_index: usize) -> Result<Vec<f64>> {
        self.check_input(model_vector)?;
        let n_out = self.mlp.output_dim();
        if output_index >= n_out {
            return Err(domain(format!("output index {output_index} outside [0, {n_out})")));
        }
        let tape = self.mlp.forward_tape(&self.normalizer.normalize_input(model_vector));
        Ok(self.gradient_from_tape(&tape, output_index))
    }

    fn gradient_from_tape(&self, tape: &[Vec<f64>], output_index: usize) -> Vec<f64> {
        let mut seed = vec![0.0; self.mlp.output_dim()];
        seed[output_index] = self.normalizer.output_sd[output_index];
        self.mlp
            .vjp(tape, &seed)
            .iter()
            .zip(&self.normalizer.input_sd)
            .map(|(g, s)| g / s)
            .collect()
    }

    /// Full Jacobian, one row per output in output order.
    pub fn jacobian(&self, model_vector: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(model_vector)?;
        let tape = self.mlp.forward_tape(&self.normalizer.normalize_input(model_vector));
        Ok((0..self.mlp.output_dim()).map(|k| self.gradient_from_tape(&tape, k)).collect())
    }

    /// Thickness-normalized gradient of one output, as a sensitivity kernel.
    pub fn kernel(&self, model_vector: &[f64], grid: &DepthGrid, wave: Wave, period_index: usize, period: f64) -> Result<SensitivityKernel> {
        if grid.len() != self.mlp.input_dim() {
            return Err(shape("depth grid does not match network input"));
        }
        let n_periods = self.mlp.output_dim() / 2;
        if period_index >= n_periods {
            return Err(domain(format!("period index {period_index} outside [0, {n_periods})")));
        }
        let g = self.backward_gradient(model_vector, output_index(wave, period_index, n_periods))?;
        let values = g.iter().zip(grid.thicknesses()).map(|(v, h)| v / h).collect();
        Ok(SensitivityKernel { wave, period, values, grid: grid.clone() })
    }
}

/// Jacobian of the checkpointed surrogate at `model_vector`.
pub fn surrogate_jacobian(checkpoint: &SurrogateCheckpoint, model_vector: &[f64]) -> Result<Vec<Vec<f64>>> {
    checkpoint.surrogate.jacobian(model_vector)
}

pub fn backward_gradient(checkpoint: &SurrogateCheckpoint, model_vector: &[f64], output_index: usize) -> Result<Vec<f64>> {
    checkpoint.surrogate.backward_gradient(model_vector, output_index)
}

pub fn forward(checkpoint: &SurrogateCheckpoint, model_vector: &[f64]) -> Result<Vec<f64>> {
    checkpoint.surrogate.forward(model_vector)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::rng;

    fn toy() -> Surrogate {
        let mlp = Mlp::init(&[6, 9, 8, 4], &mut rng::stream(21, rng::purpose::INIT, 0));
        let normalizer = Normalizer {
            input_mean: vec![3.0, 3.2, 3.5, 3.9, 4.2, 4.5],
            input_sd: vec![0.3, 0.25, 0.2, 0.2, 0.15, 0.1],
            output_mean: vec![3.0, 3.5, 3.2, 3.8],
            output_sd: vec![0.1, 0.2, 0.15, 0.05],
        };
        Surrogate { mlp, normalizer }
    }

    #[test]
    fn zero_network_returns_output_means() {
        let s = Surrogate { mlp: Mlp::zeros(&[6, 5, 4]), normalizer: toy().normalizer };
        assert_eq!(s.forward(&[3.0; 6]).unwrap(), s.normalizer.output_mean);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let s = toy();
        assert!(matches!(s.forward(&[f64::NAN, 3.0, 3.0, 3.0, 3.0, 3.0]), Err(Error::Domain(_))));
        assert!(matches!(s.forward(&[3.0; 5]), Err(Error::Shape(_))));
        assert!(matches!(s.backward_gradient(&[3.0; 6], 4), Err(Error::Domain(_))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = toy();
        let x = vec![2.9, 3.3, 3.4, 4.0, 4.1, 4.6];
        for k in 0..4 {
            let g = s.backward_gradient(&x, k).unwrap();
            for i in 0..6 {
                let h = 1e-5;
                let mut up = x.clone();
                up[i] += h;
                let mut dn = x.clone();
                dn[i] -= h;
                let fd = (s.forward(&up).unwrap()[k] - s.forward(&dn).unwrap()[k]) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-3), "{k},{i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn linear_network_gradient_is_scaled_weight_row() {
        let mlp = Mlp::init(&[6, 4], &mut rng::stream(2, rng::purpose::INIT, 0));
        let s = Surrogate { mlp, normalizer: toy().normalizer };
        let g = s.backward_gradient(&[3.0; 6], 2).unwrap();
        for i in 0..6 {
            let expect = s.mlp.weights(0)[2 * 6 + i] * s.normalizer.output_sd[2] / s.normalizer.input_sd[i];
            assert!((g[i] - expect).abs() <= 1e-15 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn jacobian_rows_equal_gradients_exactly() {
        let s = toy();
        let x = [3.1, 3.0, 3.6, 3.7, 4.4, 4.4];
        let j = s.jacobian(&x).unwrap();
        assert_eq!(j.len(), 4);
        for (k, row) in j.iter().enumerate() {
            assert_eq!(row, &s.backward_gradient(&x, k).unwrap());
        }
    }
}
