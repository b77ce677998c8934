//! Commands behind the command-line interface. Each one is a pure function of
//! a [`RunConfig`] and its input files and writes its artifacts into
//! `RunConfig::out_dir`.
//!
//! Multi-model tables carry a leading `model` column (index into the model
//! ensemble); the remaining columns follow the single-model layouts.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    band_report, prior_artifact_score, write_band_report_csv, ArtifactScore, BandReport, PeriodRecord, DEFAULT_ARTIFACT_WINDOW,
    STANDARD_BANDS,
};
use crate::dispersion::{csv_err, DispersionCurve, PeriodGrid, Wave, STANDARD_PERIOD_COUNT};
use crate::earth_model::{
    ensemble_percentiles, read_ensemble, sample_model, standard_depth_grid, write_ensemble, DepthGrid, EnsembleRecord, PriorConfig,
    PriorKind,
};
use crate::error::{Error, Result};
use crate::generate::{generate_samples, model_velocities, to_dataset, to_records};
use crate::inversion::{fit_rows, invert, stack_observations, InversionConfig, InversionResult, NoiseModel};
use crate::kernels::{kernel_matrix_with_epsilon, KernelMatrix, DEFAULT_EPSILON};
use crate::parallel::map_indexed;
use crate::rng;
use crate::surrogate::{load_checkpoint, output_index, save_checkpoint, train, Dataset, MaskedSample, Surrogate, TrainingConfig};

pub const ENSEMBLE_FILE: &str = "ensemble.ndjson";
pub const CURVES_FILE: &str = "curves.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const SURROGATE_KERNELS_FILE: &str = "kernels_surrogate.csv";
pub const REFERENCE_KERNELS_FILE: &str = "kernels_reference.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const BAND_REPORT_FILE: &str = "band_report.csv";

/// Prior draws used for the default starting model of an inversion.
pub const STARTING_MODEL_DRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub prior: PriorKind,
    pub dataset_size: usize,
    /// Log-spaced periods over 2-60 s, unless `periods` is given.
    pub period_count: usize,
    pub periods: Option<Vec<f64>>,
    pub training: TrainingConfig,
    pub kernel_epsilon: f64,
    pub inversion: InversionConfig,
    /// Observation standard deviation assumed by the inversion, km/s.
    pub noise_sigma: f64,
    /// Gaussian noise added to observations before inversion, km/s.
    pub observation_noise: f64,
    pub artifact_window: (f64, f64),
    /// Model whose kernels feed the prior-artifact score in `compare`.
    pub artifact_model: usize,
    pub out_dir: PathBuf,
    pub deterministic: bool,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            prior: PriorKind::Weak,
            dataset_size: 1000,
            period_count: STANDARD_PERIOD_COUNT,
            periods: None,
            training: TrainingConfig::default(),
            kernel_epsilon: DEFAULT_EPSILON,
            inversion: InversionConfig::default(),
            noise_sigma: 0.01,
            observation_noise: 0.0,
            artifact_window: DEFAULT_ARTIFACT_WINDOW,
            artifact_model: 0,
            out_dir: PathBuf::from("out"),
            deterministic: false,
            threads: 1,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.dataset_size == 0 {
            return cfg("dataset size must be positive".into());
        }
        if self.threads == 0 {
            return cfg("thread count must be positive".into());
        }
        if !(1e-4..=1e-2).contains(&self.kernel_epsilon) {
            return cfg(format!("kernel epsilon {} outside [1e-4, 1e-2]", self.kernel_epsilon));
        }
        if !(self.noise_sigma > 0.0) || !(self.observation_noise >= 0.0) {
            return cfg("noise levels must be positive".into());
        }
        if !(self.artifact_window.0 < self.artifact_window.1) {
            return cfg("artifact depth window is empty".into());
        }
        self.period_grid().map_err(|e| Error::Config(e.to_string()))?;
        PriorConfig::for_kind(self.prior).validate()?;
        self.training.validate()?;
        self.inversion.validate()
    }

    pub fn period_grid(&self) -> Result<PeriodGrid> {
        match &self.periods {
            Some(p) => PeriodGrid::new(p.clone()),
            None => PeriodGrid::log_spaced(self.period_count),
        }
    }

    /// Worker count; the deterministic flag forces a single worker.
    pub fn workers(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.threads
        }
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn ensure_out_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Model-indexed tables

#[derive(Debug, Serialize, Deserialize)]
struct IndexedCurveRow {
    model: usize,
    wave: Wave,
    period_s: f64,
    phase_velocity_km_s: f64,
    mask: bool,
}

pub fn write_indexed_curves<W: Write>(out: W, sets: &[Vec<DispersionCurve>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (model, curves) in sets.iter().enumerate() {
        for c in curves {
            for ((&t, &v), &m) in c.periods.periods().iter().zip(&c.phase_velocity).zip(&c.mask) {
                w.serialize(IndexedCurveRow { model, wave: c.wave, period_s: t, phase_velocity_km_s: v, mask: m })
                    .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Curves grouped by model index, ascending; within a model, one curve per wave.
pub fn read_indexed_curves(path: &Path) -> Result<Vec<(usize, Vec<DispersionCurve>)>> {
    let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let mut grouped: BTreeMap<usize, [Vec<(f64, f64, bool)>; 2]> = BTreeMap::new();
    for row in rdr.deserialize::<IndexedCurveRow>() {
        let r = row.map_err(csv_err)?;
        grouped.entry(r.model).or_default()[r.wave.branch_index()].push((r.period_s, r.phase_velocity_km_s, r.mask));
    }
    let mut out = Vec::with_capacity(grouped.len());
    for (model, branches) in grouped {
        let mut curves = Vec::new();
        for (wave, rows) in Wave::BOTH.into_iter().zip(branches) {
            if rows.is_empty() {
                continue;
            }
            let curve = DispersionCurve {
                wave,
                periods: PeriodGrid::new(rows.iter().map(|r| r.0).collect())?,
                phase_velocity: rows.iter().map(|r| r.1).collect(),
                mask: rows.iter().map(|r| r.2).collect(),
            };
            curve.validate()?;
            curves.push(curve);
        }
        out.push((model, curves));
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexedKernelRow {
    model: usize,
    wave: Wave,
    period_s: f64,
    layer_index: usize,
    layer_top_km: f64,
    kernel_value: f64,
}

pub fn write_indexed_kernels<W: Write>(out: W, sets: &[Vec<KernelMatrix>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (model, matrices) in sets.iter().enumerate() {
        for m in matrices {
            for row in &m.rows {
                let tops = row.grid.layer_top_depths();
                for (i, (&v, &top)) in row.values.iter().zip(&tops).enumerate() {
                    w.serialize(IndexedKernelRow { model, wave: row.wave, period_s: row.period, layer_index: i, layer_top_km: top, kernel_value: v })
                        .map_err(csv_err)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Kernel rows keyed by `(model, wave, period)`, with the layer tops of the file.
pub type KernelTable = BTreeMap<(usize, Wave, u64), Vec<f64>>;

fn period_key(t: f64) -> u64 {
    t.to_bits()
}

pub fn read_indexed_kernels(path: &Path) -> Result<(KernelTable, Vec<f64>)> {
    let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let mut table: KernelTable = BTreeMap::new();
    let mut tops: Vec<f64> = Vec::new();
    for row in rdr.deserialize::<IndexedKernelRow>() {
        let r = row.map_err(csv_err)?;
        let values = table.entry((r.model, r.wave, period_key(r.period_s))).or_default();
        if r.layer_index != values.len() {
            return Err(Error::Shape(format!("kernel rows out of layer order at model {} {} {} s", r.model, r.wave, r.period_s)));
        }
        values.push(r.kernel_value);
        if r.layer_index == tops.len() {
            tops.push(r.layer_top_km);
        }
    }
    Ok((table, tops))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PredictionRow {
    model: usize,
    wave: Wave,
    period_s: f64,
    predicted_km_s: f64,
    reference_km_s: f64,
}

// ---------------------------------------------------------------------------
// generate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub seed: u64,
    pub prior: PriorKind,
    pub count: usize,
    pub rejections: usize,
    pub fingerprint: String,
    pub periods_s: Vec<f64>,
    pub layer_thicknesses_km: Vec<f64>,
}

/// Splits a stacked velocity/mask pair into one curve per wave.
pub fn split_curves(periods: &PeriodGrid, velocities: &[f64], mask: &[bool]) -> Vec<DispersionCurve> {
    let n = periods.len();
    Wave::BOTH
        .into_iter()
        .map(|wave| {
            let r = output_index(wave, 0, n)..output_index(wave, 0, n) + n;
            DispersionCurve { wave, periods: periods.clone(), phase_velocity: velocities[r.clone()].to_vec(), mask: mask[r].to_vec() }
        })
        .collect()
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<GenerateSummary> {
    cfg.validate()?;
    cfg.ensure_out_dir()?;
    let grid = standard_depth_grid();
    let periods = cfg.period_grid()?;
    let prior = PriorConfig::for_kind(cfg.prior);
    let samples = generate_samples(cfg.seed, cfg.dataset_size, &grid, &periods, &prior, &cfg.training.mask_policy, cfg.workers())?;
    let dataset = to_dataset(&samples, &grid, &periods);
    write_ensemble(create(&cfg.out_path(ENSEMBLE_FILE))?, &to_records(&samples, cfg.seed, &prior))?;
    let curves: Vec<Vec<DispersionCurve>> = samples.iter().map(|s| split_curves(&periods, &s.velocities, &s.mask)).collect();
    write_indexed_curves(create(&cfg.out_path(CURVES_FILE))?, &curves)?;
    let summary = GenerateSummary {
        seed: cfg.seed,
        prior: cfg.prior,
        count: samples.len(),
        rejections: samples.iter().map(|s| s.rejected).sum(),
        fingerprint: dataset.fingerprint(),
        periods_s: periods.periods().to_vec(),
        layer_thicknesses_km: grid.thicknesses().to_vec(),
    };
    write_json(&cfg.out_path("generate.json"), &summary)?;
    Ok(summary)
}

/// Rebuilds the training set from a `generate` output directory.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let grid = standard_depth_grid();
    let records = read_ensemble(BufReader::new(File::open(dir.join(ENSEMBLE_FILE))?))?;
    let curves = read_indexed_curves(&dir.join(CURVES_FILE))?;
    if records.len() != curves.len() {
        return Err(Error::Config(format!("{} models but {} curve sets", records.len(), curves.len())));
    }
    let mut periods: Option<PeriodGrid> = None;
    let mut samples = Vec::with_capacity(records.len());
    for (i, (rec, (model_index, set))) in records.iter().zip(&curves).enumerate() {
        if *model_index != i || set.len() != 2 {
            return Err(Error::Config(format!("curve set {i} is missing or incomplete")));
        }
        let p = periods.get_or_insert_with(|| set[0].periods.clone());
        let n = p.len();
        let mut target = vec![0.0; 2 * n];
        let mut mask = vec![false; 2 * n];
        for c in set {
            if c.periods != *p {
                return Err(Error::Config(format!("curve set {i} uses a different period grid")));
            }
            for k in 0..n {
                let j = output_index(c.wave, k, n);
                target[j] = c.phase_velocity[k];
                mask[j] = c.mask[k];
            }
        }
        let model = rec.to_model(&grid).map_err(|e| Error::Config(e.to_string()))?;
        samples.push(MaskedSample { model_vector: model.vs(), target, mask });
    }
    let periods = periods.ok_or(Error::EmptyEnsemble)?;
    let ds = Dataset { depth_grid: grid, periods, samples };
    ds.validate()?;
    Ok(ds)
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub checkpoint_id: String,
    pub dataset_fingerprint: String,
    pub epochs: usize,
    pub best_epoch: usize,
    pub final_train_loss: f64,
    pub final_validation_loss: f64,
    pub best_validation_loss: f64,
}

pub fn cmd_train(cfg: &RunConfig, dataset_dir: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    let dataset = load_dataset(dataset_dir)?;
    if dataset.periods != cfg.period_grid()? {
        return Err(Error::Config("dataset period grid differs from the configured one".into()));
    }
    cfg.ensure_out_dir()?;
    let training = TrainingConfig { seed: cfg.seed, ..cfg.training.clone() };
    let ck = train(&dataset, &training)?;
    save_checkpoint(&ck, &cfg.out_path(CHECKPOINT_FILE))?;
    let last = *ck.history.last().expect("at least one epoch");
    let summary = TrainSummary {
        seed: cfg.seed,
        checkpoint_id: ck.id(),
        dataset_fingerprint: ck.dataset_fingerprint.clone(),
        epochs: ck.history.len(),
        best_epoch: ck.best_epoch,
        final_train_loss: last.train,
        final_validation_loss: last.validation,
        best_validation_loss: ck.best_validation_loss().expect("best epoch recorded"),
    };
    write_json(&cfg.out_path("train.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// kernels

/// Surrogate and reference kernels plus dispersion for one model, Rayleigh first.
#[derive(Debug, Clone)]
pub struct ModelKernels {
    pub surrogate: Vec<KernelMatrix>,
    pub reference: Vec<KernelMatrix>,
    pub predicted: Vec<f64>,
    pub reference_velocities: Vec<f64>,
}

pub fn surrogate_kernel_matrix(surrogate: &Surrogate, model_vector: &[f64], grid: &DepthGrid, periods: &PeriodGrid, wave: Wave) -> Result<KernelMatrix> {
    let rows = periods
        .periods()
        .iter()
        .enumerate()
        .map(|(k, &t)| surrogate.kernel(model_vector, grid, wave, k, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(KernelMatrix { wave, rows })
}

pub fn model_kernels(surrogate: &Surrogate, record: &EnsembleRecord, grid: &DepthGrid, periods: &PeriodGrid, epsilon: f64) -> Result<ModelKernels> {
    let model = record.to_model(grid)?;
    let x = model.vs();
    let mut out = ModelKernels { surrogate: Vec::new(), reference: Vec::new(), predicted: surrogate.forward(&x)?, reference_velocities: model_velocities(&model, periods)? };
    for wave in Wave::BOTH {
        out.surrogate.push(surrogate_kernel_matrix(surrogate, &x, grid, periods, wave)?);
        out.reference.push(kernel_matrix_with_epsilon(&model, periods, wave, epsilon)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelsSummary {
    pub seed: u64,
    pub checkpoint_id: String,
    pub dataset_fingerprint: String,
    pub models: usize,
    pub epsilon: f64,
}

pub fn cmd_kernels(cfg: &RunConfig, checkpoint: &Path, models: &Path, limit: Option<usize>) -> Result<KernelsSummary> {
    cfg.validate()?;
    let ck = load_checkpoint(checkpoint)?;
    if ck.periods != cfg.period_grid()? {
        return Err(Error::Config("checkpoint period grid differs from the configured one".into()));
    }
    let mut records = read_ensemble(BufReader::new(File::open(models)?))?;
    if let Some(n) = limit {
        records.truncate(n);
    }
    for r in &records {
        r.to_model(&ck.depth_grid).map_err(|e| Error::Config(format!("model does not fit the checkpoint grid: {e}")))?;
    }
    cfg.ensure_out_dir()?;
    let sets = map_indexed(records.len(), cfg.workers(), |i| model_kernels(&ck.surrogate, &records[i], &ck.depth_grid, &ck.periods, cfg.kernel_epsilon))?;
    let sur: Vec<_> = sets.iter().map(|s| s.surrogate.clone()).collect();
    let refs: Vec<_> = sets.iter().map(|s| s.reference.clone()).collect();
    write_indexed_kernels(create(&cfg.out_path(SURROGATE_KERNELS_FILE))?, &sur)?;
    write_indexed_kernels(create(&cfg.out_path(REFERENCE_KERNELS_FILE))?, &refs)?;
    let mut w = csv::Writer::from_writer(create(&cfg.out_path(PREDICTIONS_FILE))?);
    let n = ck.periods.len();
    for (model, s) in sets.iter().enumerate() {
        for wave in Wave::BOTH {
            for (k, &t) in ck.periods.periods().iter().enumerate() {
                let j = output_index(wave, k, n);
                w.serialize(PredictionRow { model, wave, period_s: t, predicted_km_s: s.predicted[j], reference_km_s: s.reference_velocities[j] })
                    .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    let summary = KernelsSummary {
        seed: cfg.seed,
        checkpoint_id: ck.id(),
        dataset_fingerprint: ck.dataset_fingerprint.clone(),
        models: records.len(),
        epsilon: cfg.kernel_epsilon,
    };
    write_json(&cfg.out_path("kernels.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// compare

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveArtifact {
    pub wave: Wave,
    pub model: usize,
    #[serde(flatten)]
    pub score: ArtifactScore,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareSummary {
    pub seed: u64,
    pub checkpoint_id: Option<String>,
    pub dataset_fingerprint: Option<String>,
    pub bands: Vec<BandReport>,
    pub omitted_bands: Vec<String>,
    pub artifact: Vec<WaveArtifact>,
}

pub fn cmd_compare(cfg: &RunConfig, surrogate_kernels: &Path, reference_kernels: &Path, predictions: &Path) -> Result<CompareSummary> {
    cfg.validate()?;
    let (sur, sur_tops) = read_indexed_kernels(surrogate_kernels)?;
    let (refs, ref_tops) = read_indexed_kernels(reference_kernels)?;
    if sur.len() != refs.len() || sur.keys().ne(refs.keys()) || sur_tops != ref_tops {
        return Err(Error::Shape("surrogate and reference kernel files cover different rows".into()));
    }
    let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(predictions)?));
    let mut disp: BTreeMap<(usize, Wave, u64), (f64, f64)> = BTreeMap::new();
    for row in rdr.deserialize::<PredictionRow>() {
        let r = row.map_err(csv_err)?;
        disp.insert((r.model, r.wave, period_key(r.period_s)), (r.predicted_km_s, r.reference_km_s));
    }
    let mut keys: Vec<_> = sur.keys().chain(disp.keys()).copied().collect();
    keys.sort();
    keys.dedup();
    let records: Vec<PeriodRecord> = keys
        .iter()
        .map(|k| PeriodRecord {
            wave: k.1,
            period: f64::from_bits(k.2),
            dispersion: disp.get(k).copied(),
            kernels: sur.get(k).map(|s| (s.clone(), refs[k].clone())),
        })
        .collect();
    let bands = band_report(&records, &STANDARD_BANDS)?;
    let mut omitted = Vec::new();
    for wave in Wave::BOTH {
        for b in STANDARD_BANDS {
            if !bands.iter().any(|r| r.wave == wave && r.band == b) {
                eprintln!("warning: no {wave} records in the {} s band", b.label());
                omitted.push(format!("{wave} {}", b.label()));
            }
        }
    }

    let mut artifact = Vec::new();
    if !sur.is_empty() {
        let grid = standard_depth_grid();
        if sur_tops != grid.layer_top_depths() {
            return Err(Error::Shape("kernel layers do not match the standard depth grid".into()));
        }
        for wave in Wave::BOTH {
            let rows: Vec<_> = sur.keys().filter(|k| k.0 == cfg.artifact_model && k.1 == wave).collect();
            if rows.is_empty() {
                continue;
            }
            let periods: Vec<f64> = rows.iter().map(|k| f64::from_bits(k.2)).collect();
            let s: Vec<Vec<f64>> = rows.iter().map(|k| sur[*k].clone()).collect();
            let r: Vec<Vec<f64>> = rows.iter().map(|k| refs[*k].clone()).collect();
            match prior_artifact_score(&s, &r, &grid, &periods, cfg.artifact_window) {
                Ok(score) => artifact.push(WaveArtifact { wave, model: cfg.artifact_model, score }),
                Err(Error::Domain(m)) => eprintln!("warning: no {wave} artifact score: {m}"),
                Err(e) => return Err(e),
            }
        }
    }

    let meta: Option<KernelsSummary> = surrogate_kernels.parent().map(|d| d.join("kernels.json")).filter(|p| p.exists()).map(|p| read_json(&p)).transpose()?;
    cfg.ensure_out_dir()?;
    write_band_report_csv(create(&cfg.out_path(BAND_REPORT_FILE))?, &bands)?;
    let summary = CompareSummary {
        seed: cfg.seed,
        checkpoint_id: meta.as_ref().map(|m| m.checkpoint_id.clone()),
        dataset_fingerprint: meta.map(|m| m.dataset_fingerprint),
        bands,
        omitted_bands: omitted,
        artifact,
    };
    write_json(&cfg.out_path("compare.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// invert

/// Per-layer median of `draws` weak-prior models.
pub fn prior_median_model(seed: u64, grid: &DepthGrid, draws: usize) -> Result<Vec<f64>> {
    let prior = PriorConfig::weak();
    let models = (0..draws)
        .map(|i| sample_model(&mut rng::stream(seed, rng::purpose::STARTING_MODEL, i as u64), grid, &prior))
        .collect::<Result<Vec<_>>>()?;
    Ok(ensemble_percentiles(&models, &[0.5])?.remove(0))
}

/// Adds `N(0, sd^2)` noise to every observed channel from stream `(seed, NOISE, index)`.
pub fn add_noise(obs: &mut [f64], mask: &[bool], sd: f64, seed: u64, index: u64) -> Result<()> {
    if sd == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sd).map_err(|e| Error::Config(e.to_string()))?;
    let mut r = rng::stream(seed, rng::purpose::NOISE, index);
    for (o, m) in obs.iter_mut().zip(mask) {
        let e: f64 = r.sample(normal);
        if *m {
            *o += e;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionReport {
    pub model: usize,
    pub seed: u64,
    pub checkpoint_id: String,
    pub initial_model: Vec<f64>,
    pub layer_top_km: Vec<f64>,
    #[serde(flatten)]
    pub result: InversionResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertCase {
    pub model: usize,
    pub converged: bool,
    pub iterations: usize,
    pub initial_misfit: f64,
    pub final_misfit: f64,
    pub chi_square_per_datum: f64,
}

pub fn cmd_invert(cfg: &RunConfig, checkpoint: &Path, observations: &Path, initial: Option<&Path>) -> Result<Vec<InvertCase>> {
    cfg.validate()?;
    let ck = load_checkpoint(checkpoint)?;
    let n = ck.periods.len();
    let sets = read_indexed_curves(observations)?;
    let starts: Vec<Vec<f64>> = match initial {
        Some(p) => {
            let recs = read_ensemble(BufReader::new(File::open(p)?))?;
            if recs.len() != 1 && recs.len() != sets.len() {
                return Err(Error::Config(format!("{} starting models for {} observation sets", recs.len(), sets.len())));
            }
            recs.iter().map(|r| r.to_model(&ck.depth_grid).map(|m| m.vs())).collect::<Result<_>>()?
        }
        None => vec![prior_median_model(cfg.seed, &ck.depth_grid, STARTING_MODEL_DRAWS)?],
    };
    cfg.ensure_out_dir()?;
    let reports = map_indexed(sets.len(), cfg.workers(), |i| {
        let (model, curves) = &sets[i];
        let (mut obs, mask) = stack_observations(curves, n)?;
        add_noise(&mut obs, &mask, cfg.observation_noise, cfg.seed, *model as u64)?;
        let m0 = &starts[if starts.len() == 1 { 0 } else { i }];
        let noise = NoiseModel::uniform(2 * n, cfg.noise_sigma);
        let result = invert(&ck.surrogate, &obs, &mask, m0, &noise, &cfg.inversion)?;
        let mut w = csv::Writer::from_writer(create(&cfg.out_path(&format!("fit_{model}.csv")))?);
        for row in fit_rows(&result, &obs, &mask, ck.periods.periods()) {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(InversionReport {
            model: *model,
            seed: cfg.seed,
            checkpoint_id: ck.id(),
            initial_model: m0.clone(),
            layer_top_km: ck.depth_grid.layer_top_depths(),
            result,
        })
    })?;
    let mut cases = Vec::new();
    for r in &reports {
        write_json(&cfg.out_path(&format!("inversion_{}.json", r.model)), r)?;
        cases.push(InvertCase {
            model: r.model,
            converged: r.result.converged,
            iterations: r.result.history.len() - 1,
            initial_misfit: r.result.misfit_trace[0],
            final_misfit: r.result.final_misfit(),
            chi_square_per_datum: r.result.final_misfit() / r.result.observed_channels.max(1) as f64,
        });
    }
    write_json(&cfg.out_path("invert.json"), &cases)?;
    Ok(cases)
}
