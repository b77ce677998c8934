//! Masked mean-squared-error training with Adam.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::{Dataset, MaskPolicy, MaskedSample, Normalizer};
use super::mlp::{BatchTape, Mlp};
use super::{Surrogate, SurrogateCheckpoint};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    /// Learning rate reached at the last epoch as a fraction of the initial
    /// one (cosine schedule). 1.0 keeps the rate constant.
    pub final_lr_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub mask_policy: MaskPolicy,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![256, 256, 256],
            learning_rate: 1e-3,
            final_lr_fraction: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 128,
            epochs: 100,
            seed: 0,
            validation_fraction: 0.1,
            mask_policy: MaskPolicy::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.hidden_layers.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epoch count must be positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return bad("validation fraction must lie in (0, 0.5]");
        }
        self.mask_policy.validate()
    }

    pub fn layer_sizes(&self, n_in: usize, n_out: usize) -> Vec<usize> {
        std::iter::once(n_in).chain(self.hidden_layers.iter().copied()).chain(std::iter::once(n_out)).collect()
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 || self.final_lr_fraction >= 1.0 {
            return self.learning_rate;
        }
        let t = epoch as f64 / (self.epochs - 1) as f64;
        let f = self.final_lr_fraction + (1.0 - self.final_lr_fraction) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
        self.learning_rate * f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub validation: f64,
}

struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize, beta1: f64, beta2: f64) -> Self {
        Self { beta1, beta2, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
        }
    }
}

/// Normalized inputs, targets and mask of a batch, row-major.
struct Batch {
    x: Vec<f64>,
    y: Vec<f64>,
    mask: Vec<f64>,
}

fn assemble(samples: &[&MaskedSample], norm: &Normalizer) -> Batch {
    let mut b = Batch { x: Vec::new(), y: Vec::new(), mask: Vec::new() };
    for s in samples {
        b.x.extend(norm.normalize_input(&s.model_vector));
        b.y.extend(norm.normalize_output(&s.target));
        b.mask.extend(s.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }));
    }
    b
}

/// Masked squared error sum and observed count of a forward batch.
fn masked_sse(pred: &[f64], batch: &Batch) -> (f64, f64) {
    let mut sse = 0.0;
    let mut count = 0.0;
    for ((p, t), m) in pred.iter().zip(&batch.y).zip(&batch.mask) {
        if *m != 0.0 {
            sse += (p - t) * (p - t);
            count += 1.0;
        }
    }
    (sse, count)
}

const EVAL_CHUNK: usize = 512;

/// Masked MSE in normalized output space,
/// `sum(mask * (pred - target)^2) / sum(mask)` over all samples.
pub fn masked_loss(mlp: &Mlp, norm: &Normalizer, samples: &[MaskedSample]) -> f64 {
    let mut tape = BatchTape::default();
    let (mut sse, mut count) = (0.0, 0.0);
    for chunk in samples.chunks(EVAL_CHUNK) {
        let refs: Vec<&MaskedSample> = chunk.iter().collect();
        let batch = assemble(&refs, norm);
        mlp.forward_batch(&batch.x, refs.len(), &mut tape);
        let (s, c) = masked_sse(tape.output(), &batch);
        sse += s;
        count += c;
    }
    if count > 0.0 {
        sse / count
    } else {
        0.0
    }
}

/// Deterministic train/validation split: shuffled indices, validation first.
pub fn split_indices(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, rng::purpose::SPLIT, 0));
    let n_val = ((n as f64 * validation_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let train = idx.split_off(n_val);
    (train, idx)
}

/// Result of [`fit`]: best-validation network plus loss history.
pub struct FitOutcome {
    pub mlp: Mlp,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
}

/// Trains `mlp` in place on pre-split data with a fixed normalizer and returns
/// the parameters of the epoch with the lowest validation loss.
pub fn fit(mut mlp: Mlp, norm: &Normalizer, train: &[MaskedSample], val: &[MaskedSample], cfg: &TrainingConfig) -> FitOutcome {
    let n_params = mlp.params().len();
    let mut adam = Adam::new(n_params, cfg.beta1, cfg.beta2);
    let mut grad = vec![0.0; n_params];
    let mut tape = BatchTape::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0usize, mlp.clone());

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(cfg.seed, rng::purpose::SHUFFLE, epoch as u64));
        let lr = cfg.lr_at(epoch);
        let (mut sse, mut count) = (0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&MaskedSample> = chunk.iter().map(|&i| &train[i]).collect();
            let batch = assemble(&refs, norm);
            mlp.forward_batch(&batch.x, refs.len(), &mut tape);
            let (s, c) = masked_sse(tape.output(), &batch);
            if c == 0.0 {
                continue;
            }
            sse += s;
            count += c;
            let scale = 2.0 / c;
            let d_out: Vec<f64> = tape
                .output()
                .iter()
                .zip(&batch.y)
                .zip(&batch.mask)
                .map(|((p, t), m)| scale * m * (p - t))
                .collect();
            mlp.backward_batch(&tape, &d_out, &mut grad);
            adam.step(mlp.params_mut(), &grad, lr);
        }
        let train_loss = if count > 0.0 { sse / count } else { 0.0 };
        let val_loss = masked_loss(&mlp, norm, val);
        history.push(EpochLoss { epoch, train: train_loss, validation: val_loss });
        if val_loss < best.0 {
            best = (val_loss, epoch, mlp.clone());
        }
    }
    FitOutcome { mlp: best.2, history, best_epoch: best.1 }
}

/// Splits, normalizes, initializes and trains a surrogate on `dataset`.
pub fn train(dataset: &Dataset, cfg: &TrainingConfig) -> Result<SurrogateCheckpoint> {
    cfg.validate()?;
    dataset.validate()?;
    let n = dataset.samples.len();
    if n < 2 * cfg.batch_size {
        return Err(Error::Config(format!("dataset of {n} samples is smaller than twice the batch size {}", cfg.batch_size)));
    }
    let (train_idx, val_idx) = split_indices(n, cfg.validation_fraction, cfg.seed);
    let train: Vec<MaskedSample> = train_idx.iter().map(|&i| dataset.samples[i].clone()).collect();
    let val: Vec<MaskedSample> = val_idx.iter().map(|&i| dataset.samples[i].clone()).collect();
    let norm = Normalizer::fit(&train)?;
    let sizes = cfg.layer_sizes(dataset.input_dim(), dataset.output_dim());
    let mlp = Mlp::init(&sizes, &mut rng::stream(cfg.seed, rng::purpose::INIT, 0));
    let outcome = fit(mlp, &norm, &train, &val, cfg);
    Ok(SurrogateCheckpoint {
        surrogate: Surrogate { mlp: outcome.mlp, normalizer: norm },
        config: cfg.clone(),
        history: outcome.history,
        best_epoch: outcome.best_epoch,
        dataset_fingerprint: dataset.fingerprint(),
        depth_grid: dataset.depth_grid.clone(),
        periods: dataset.periods.clone(),
        validation_indices: val_idx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_disjoint_and_complete() {
        let (t, v) = split_indices(100, 0.1, 3);
        assert_eq!(v.len(), 10);
        let mut all: Vec<usize> = t.iter().chain(&v).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        let cfg = TrainingConfig { validation_fraction: 0.6, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = TrainingConfig { batch_size: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let cfg = TrainingConfig { epochs: 11, final_lr_fraction: 0.1, ..Default::default() };
        assert!((cfg.lr_at(0) - 1e-3).abs() < 1e-15);
        assert!((cfg.lr_at(10) - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn masked_channels_do_not_affect_loss() {
        let mlp = Mlp::init(&[3, 4, 2], &mut rng::stream(0, rng::purpose::INIT, 0));
        let norm = Normalizer::identity(3, 2);
        let mut s = MaskedSample { model_vector: vec![0.1, 0.2, 0.3], target: vec![1.0, 2.0], mask: vec![true, false] };
        let a = masked_loss(&mlp, &norm, std::slice::from_ref(&s));
        s.target[1] = 1e6;
        let b = masked_loss(&mlp, &norm, std::slice::from_ref(&s));
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
