//! Checkpoint persistence as a single JSON document.
//!
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! save/load cycle reproduces every parameter bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::Normalizer;
use super::mlp::Mlp;
use super::train::{EpochLoss, TrainingConfig};
use super::Surrogate;
use crate::dispersion::PeriodGrid;
use crate::earth_model::DepthGrid;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "swkernel-surrogate";

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateCheckpoint {
    pub surrogate: Surrogate,
    pub config: TrainingConfig,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
    pub dataset_fingerprint: String,
    pub depth_grid: DepthGrid,
    pub periods: PeriodGrid,
    /// Dataset indices held out for validation.
    pub validation_indices: Vec<usize>,
}

impl SurrogateCheckpoint {
    pub fn best_validation_loss(&self) -> Option<f64> {
        self.history.get(self.best_epoch).map(|e| e.validation)
    }

    /// Short identifier derived from the serialized parameters.
    pub fn id(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for p in self.surrogate.mlp.params() {
            h.update(p.to_bits().to_le_bytes());
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    /// Row-major `out x in`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    layer_sizes: Vec<usize>,
    layers: Vec<LayerRecord>,
    normalizer: Normalizer,
    config: TrainingConfig,
    history: Vec<EpochLoss>,
    best_epoch: usize,
    dataset_fingerprint: String,
    layer_thicknesses_km: Vec<f64>,
    periods_s: Vec<f64>,
    validation_indices: Vec<usize>,
}

pub fn to_json(ck: &SurrogateCheckpoint) -> String {
    let mlp = &ck.surrogate.mlp;
    let file = CheckpointFile {
        format: FORMAT_TAG.into(),
        version: CHECKPOINT_VERSION,
        layer_sizes: mlp.sizes().to_vec(),
        layers: (0..mlp.num_layers())
            .map(|l| LayerRecord { weights: mlp.weights(l).to_vec(), biases: mlp.biases(l).to_vec() })
            .collect(),
        normalizer: ck.surrogate.normalizer.clone(),
        config: ck.config.clone(),
        history: ck.history.clone(),
        best_epoch: ck.best_epoch,
        dataset_fingerprint: ck.dataset_fingerprint.clone(),
        layer_thicknesses_km: ck.depth_grid.thicknesses().to_vec(),
        periods_s: ck.periods.periods().to_vec(),
        validation_indices: ck.validation_indices.clone(),
    };
    serde_json::to_string(&file).expect("checkpoint serializes")
}

pub fn from_json(text: &str) -> Result<SurrogateCheckpoint> {
    let bad = |m: String| Error::CheckpointFormat(m);
    let file: CheckpointFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    if file.format != FORMAT_TAG {
        return Err(bad(format!("unexpected format tag '{}'", file.format)));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(bad(format!("version {} (expected {CHECKPOINT_VERSION})", file.version)));
    }
    let sizes = file.layer_sizes;
    if sizes.len() < 2 || file.layers.len() != sizes.len() - 1 {
        return Err(bad("layer count does not match layer sizes".into()));
    }
    let mut params = Vec::new();
    for (l, rec) in file.layers.iter().enumerate() {
        if rec.weights.len() != sizes[l] * sizes[l + 1] || rec.biases.len() != sizes[l + 1] {
            return Err(bad(format!("layer {l} has wrong parameter count")));
        }
        params.extend_from_slice(&rec.weights);
        params.extend_from_slice(&rec.biases);
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(bad("non-finite parameter".into()));
    }
    let mlp = Mlp::from_parts(sizes.clone(), params).ok_or_else(|| bad("parameter count mismatch".into()))?;
    let norm = file.normalizer;
    if norm.input_mean.len() != sizes[0] || norm.output_mean.len() != sizes[sizes.len() - 1] {
        return Err(bad("normalizer does not match network".into()));
    }
    norm.validate().map_err(|e| bad(e.to_string()))?;
    let depth_grid = DepthGrid::new(file.layer_thicknesses_km).map_err(|e| bad(e.to_string()))?;
    let periods = PeriodGrid::new(file.periods_s).map_err(|e| bad(e.to_string()))?;
    if depth_grid.len() != sizes[0] || 2 * periods.len() != sizes[sizes.len() - 1] {
        return Err(bad("grids do not match network shape".into()));
    }
    Ok(SurrogateCheckpoint {
        surrogate: Surrogate { mlp, normalizer: norm },
        config: file.config,
        history: file.history,
        best_epoch: file.best_epoch,
        dataset_fingerprint: file.dataset_fingerprint,
        depth_grid,
        periods,
        validation_indices: file.validation_indices,
    })
}

pub fn save_checkpoint(ck: &SurrogateCheckpoint, path: &Path) -> Result<()> {
    fs::write(path, to_json(ck))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<SurrogateCheckpoint> {
    let text = fs::read_to_string(path)?;
    from_json(&text)
}
