//! End-to-end runs of the pipeline commands and the binary at tiny scale.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use tempfile::TempDir;

use swkernel::dispersion::Wave;
use swkernel::earth_model::{read_ensemble, standard_depth_grid, PriorKind};
use swkernel::kernels::fd_kernel;
use swkernel::pipeline::{
    cmd_compare, cmd_generate, cmd_invert, cmd_kernels, cmd_train, load_dataset, read_indexed_curves, split_curves,
    write_indexed_curves, RunConfig, CHECKPOINT_FILE, CURVES_FILE, ENSEMBLE_FILE, PREDICTIONS_FILE, REFERENCE_KERNELS_FILE,
    SURROGATE_KERNELS_FILE,
};
use swkernel::surrogate::{load_checkpoint, masked_loss, TrainingConfig};
use swkernel::Error;

fn tiny_config(out: &Path) -> RunConfig {
    RunConfig {
        seed: 17,
        dataset_size: 300,
        training: TrainingConfig { hidden_layers: vec![24, 24], epochs: 4, batch_size: 64, ..TrainingConfig::default() },
        out_dir: out.to_path_buf(),
        deterministic: true,
        ..RunConfig::default()
    }
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn path(&self, sub: &str) -> PathBuf {
        self.dir.path().join(sub)
    }
}

/// One generated dataset and trained checkpoint shared by the tests below.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let gen = dir.path().join("gen");
        cmd_generate(&tiny_config(&gen)).unwrap();
        cmd_train(&tiny_config(&dir.path().join("train")), &gen).unwrap();
        Fixture { dir }
    })
}

#[test]
fn generate_is_reproducible_and_prior_specific() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    let again = cmd_generate(&tiny_config(&tmp.path().join("a"))).unwrap();
    let first: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.path("gen/generate.json")).unwrap()).unwrap();
    assert_eq!(first["fingerprint"], again.fingerprint);
    assert_eq!(fs::read(f.path("gen").join(CURVES_FILE)).unwrap(), fs::read(tmp.path().join("a").join(CURVES_FILE)).unwrap());
    let strong = cmd_generate(&RunConfig { prior: PriorKind::StrongLvz, ..tiny_config(&tmp.path().join("b")) }).unwrap();
    assert_ne!(strong.fingerprint, again.fingerprint);
}

#[test]
fn generated_curves_are_valid() {
    let f = fixture();
    let sets = read_indexed_curves(&f.path("gen").join(CURVES_FILE)).unwrap();
    assert_eq!(sets.len(), 300);
    for (_, curves) in &sets {
        assert_eq!(curves.len(), 2);
        for c in curves {
            c.validate().unwrap();
        }
    }
    let models = read_ensemble(std::io::BufReader::new(fs::File::open(f.path("gen").join(ENSEMBLE_FILE)).unwrap())).unwrap();
    assert_eq!(models.len(), 300);
}

#[test]
fn training_is_bit_reproducible_and_self_consistent() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    cmd_train(&tiny_config(tmp.path()), &f.path("gen")).unwrap();
    assert_eq!(fs::read(tmp.path().join(CHECKPOINT_FILE)).unwrap(), fs::read(f.path("train").join(CHECKPOINT_FILE)).unwrap());

    let ck = load_checkpoint(&f.path("train").join(CHECKPOINT_FILE)).unwrap();
    let ds = load_dataset(&f.path("gen")).unwrap();
    assert_eq!(ds.fingerprint(), ck.dataset_fingerprint);
    let val: Vec<_> = ck.validation_indices.iter().map(|&i| ds.samples[i].clone()).collect();
    let recomputed = masked_loss(&ck.surrogate.mlp, &ck.surrogate.normalizer, &val);
    assert!((recomputed - ck.best_validation_loss().unwrap()).abs() < 1e-10);
    assert!(ck.best_validation_loss().unwrap() <= ck.history[0].validation);
}

#[test]
fn training_rejects_a_mismatched_period_grid() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    let cfg = RunConfig { period_count: 20, ..tiny_config(tmp.path()) };
    assert!(matches!(cmd_train(&cfg, &f.path("gen")), Err(Error::Config(_))));
}

fn run_kernels(out: &Path, limit: usize) {
    let f = fixture();
    cmd_kernels(&tiny_config(out), &f.path("train").join(CHECKPOINT_FILE), &f.path("gen").join(ENSEMBLE_FILE), Some(limit)).unwrap();
}

fn csv_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn kernel_files_match_and_reproduce() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_kernels(&a, 2);
    run_kernels(&b, 2);
    assert_eq!(csv_rows(&a.join(SURROGATE_KERNELS_FILE)), 2 * 2 * 40 * 38);
    assert_eq!(csv_rows(&a.join(SURROGATE_KERNELS_FILE)), csv_rows(&a.join(REFERENCE_KERNELS_FILE)));
    for name in [SURROGATE_KERNELS_FILE, REFERENCE_KERNELS_FILE, PREDICTIONS_FILE] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }

    // first reference row is fd_kernel on model 0 at the shortest period
    let records = read_ensemble(std::io::BufReader::new(fs::File::open(fixture().path("gen").join(ENSEMBLE_FILE)).unwrap())).unwrap();
    let model = records[0].to_model(&standard_depth_grid()).unwrap();
    let k = fd_kernel(&model, 2.0, Wave::Rayleigh, 1e-3).unwrap();
    let mut rdr = csv::Reader::from_path(a.join(REFERENCE_KERNELS_FILE)).unwrap();
    let first: Vec<f64> = rdr.records().take(38).map(|r| r.unwrap()[5].parse().unwrap()).collect();
    assert_eq!(first, k.values);
}

#[test]
fn compare_of_identical_kernels_has_unit_cosine() {
    let tmp = TempDir::new().unwrap();
    let k = tmp.path().join("k");
    run_kernels(&k, 1);
    let cfg = tiny_config(&tmp.path().join("c"));
    let same = cmd_compare(&cfg, &k.join(REFERENCE_KERNELS_FILE), &k.join(REFERENCE_KERNELS_FILE), &k.join(PREDICTIONS_FILE)).unwrap();
    assert_eq!(same.bands.len(), 12);
    for b in &same.bands {
        assert!((b.cosine - 1.0).abs() < 1e-12);
    }
    assert!(same.artifact.iter().all(|a| a.score.no_artifact && a.score.score == 0.0));
    let header = fs::read_to_string(tmp.path().join("c/band_report.csv")).unwrap();
    assert!(header.starts_with("wave,period_s,mae,mape_percent,cosine,correlation,n\n"));
    let total: usize = same.bands.iter().map(|b| b.n).sum();
    assert_eq!(total, 80);

    let diff = cmd_compare(&cfg, &k.join(SURROGATE_KERNELS_FILE), &k.join(REFERENCE_KERNELS_FILE), &k.join(PREDICTIONS_FILE)).unwrap();
    assert_eq!(diff.checkpoint_id, same.checkpoint_id);
    assert!(diff.checkpoint_id.is_some());
}

#[test]
fn compare_rejects_mismatched_kernel_files() {
    let tmp = TempDir::new().unwrap();
    let (one, two) = (tmp.path().join("one"), tmp.path().join("two"));
    run_kernels(&one, 1);
    run_kernels(&two, 2);
    let cfg = tiny_config(&tmp.path().join("c"));
    let r = cmd_compare(&cfg, &one.join(SURROGATE_KERNELS_FILE), &two.join(REFERENCE_KERNELS_FILE), &one.join(PREDICTIONS_FILE));
    assert!(matches!(r, Err(Error::Shape(_))));
}

/// Observations predicted by the checkpoint itself for the first `n` models.
fn self_consistent_observations(path: &Path, n: usize) {
    let f = fixture();
    let ck = load_checkpoint(&f.path("train").join(CHECKPOINT_FILE)).unwrap();
    let ds = load_dataset(&f.path("gen")).unwrap();
    let sets: Vec<_> = ds.samples[..n]
        .iter()
        .map(|s| split_curves(&ck.periods, &ck.surrogate.forward(&s.model_vector).unwrap(), &[true; 80]))
        .collect();
    write_indexed_curves(fs::File::create(path).unwrap(), &sets).unwrap();
}

#[test]
fn inverse_crime_converges_with_full_sigma_profile() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    let obs = tmp.path().join("obs.csv");
    self_consistent_observations(&obs, 2);
    let cases = cmd_invert(&tiny_config(tmp.path()), &f.path("train").join(CHECKPOINT_FILE), &obs, None).unwrap();
    assert_eq!(cases.len(), 2);
    for c in &cases {
        assert!(c.converged, "{c:?}");
        assert!(c.final_misfit < c.initial_misfit);
        let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join(format!("inversion_{}.json", c.model))).unwrap()).unwrap();
        assert_eq!(report["posterior_sigma"].as_array().unwrap().len(), 38);
        assert_eq!(csv_rows(&tmp.path().join(format!("fit_{}.csv", c.model))), 80);
    }
}

#[test]
fn noisy_inversion_is_reproducible() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    let obs = tmp.path().join("obs.csv");
    self_consistent_observations(&obs, 1);
    let run = |sub: &str| {
        let cfg = RunConfig { observation_noise: 0.01, ..tiny_config(&tmp.path().join(sub)) };
        cmd_invert(&cfg, &f.path("train").join(CHECKPOINT_FILE), &obs, None).unwrap();
        fs::read(tmp.path().join(sub).join("inversion_0.json")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

fn binary(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_swkernel")).args(args).output().unwrap().status.code().unwrap()
}

#[test]
fn exit_codes_follow_error_classes() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\"dataset_size\": 0}").unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(binary(&["generate", "--config", bad.to_str().unwrap(), "--out", out]), 2);
    fs::write(&bad, "{\"no_such_field\": 1}").unwrap();
    assert_eq!(binary(&["generate", "--config", bad.to_str().unwrap(), "--out", out]), 2);
    let missing = tmp.path().join("missing.json");
    assert_eq!(binary(&["invert", "--checkpoint", missing.to_str().unwrap(), "--observations", missing.to_str().unwrap(), "--out", out]), 4);
    assert_eq!(binary(&["generate", "--size", "3", "--seed", "4", "--out", out, "--deterministic"]), 0);
    assert_eq!(Error::Numerical("x".into()).exit_code(), 3);
    assert_eq!(Error::NoRoot { wave: Wave::Love, period: 3.0 }.exit_code(), 3);
}
