//! Monte Carlo checks of sampler statistics and the artifact-score null.

use rand::Rng;

use swkernel::analysis::{persistence_fraction, PERSISTENCE_TOLERANCE};
use swkernel::earth_model::{ensemble_percentiles, sample_model, sample_strong_lvz_with_params, standard_depth_grid, PriorConfig};
use swkernel::rng;
use swkernel::surrogate::{sample_mask, MaskPolicy};

#[test]
fn weak_prior_spread_exceeds_threshold_at_every_depth() {
    let grid = standard_depth_grid();
    let models: Vec<_> = (0..10_000)
        .map(|i| sample_model(&mut rng::stream(1, rng::purpose::MODEL, i), &grid, &PriorConfig::weak()).unwrap())
        .collect();
    let p = ensemble_percentiles(&models, &[0.1, 0.9]).unwrap();
    for layer in 0..grid.len() {
        assert!(p[1][layer] - p[0][layer] > 0.3, "layer {layer}: {}", p[1][layer] - p[0][layer]);
    }
}

#[test]
fn lvz_center_mean_matches_prior() {
    let grid = standard_depth_grid();
    let cfg = PriorConfig::strong_lvz();
    let n = 10_000;
    let mean = (0..n)
        .map(|i| sample_strong_lvz_with_params(&mut rng::stream(2, rng::purpose::MODEL, i), &grid, &cfg).unwrap().lvz_center)
        .sum::<f64>()
        / n as f64;
    assert!((mean - 70.0).abs() < 1.0, "{mean}");
}

#[test]
fn persistence_under_uniform_null() {
    let mut r = rng::stream(3, rng::purpose::NOISE, 0);
    let runs = 1000;
    let mean = (0..runs)
        .map(|_| {
            let depths: Vec<f64> = (0..13).map(|_| r.random_range(40.0..110.0)).collect();
            persistence_fraction(&depths, PERSISTENCE_TOLERANCE).unwrap().0
        })
        .sum::<f64>()
        / runs as f64;
    assert!((mean - 20.0 / 70.0).abs() < 0.08, "{mean}");
}

#[test]
fn branch_drop_rate_is_close_to_policy() {
    let policy = MaskPolicy::default();
    let dropped = (0..10_000)
        .filter(|&i| {
            let m = sample_mask(&mut rng::stream(4, rng::purpose::MASK, i), &policy, 40);
            !m[..40].iter().any(|b| *b) || !m[40..].iter().any(|b| *b)
        })
        .count();
    assert!((dropped as f64 / 1e4 - policy.branch_drop_prob).abs() < 0.02);
}
