//! Levenberg-Marquardt inversion of dispersion data through the surrogate,
//! with diagonal posterior uncertainty from the Fisher information.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dispersion::{DispersionCurve, Wave};
use crate::earth_model::{VS_MAX, VS_MIN};
use crate::error::{domain, shape, Error, Result};
use crate::surrogate::{output_index, Surrogate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation per observation channel, km/s.
    pub sigma: Vec<f64>,
}

impl NoiseModel {
    pub fn uniform(channels: usize, sigma: f64) -> Self {
        Self { sigma: vec![sigma; channels] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(domain("noise sigma must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionConfig {
    pub max_iterations: usize,
    /// Starting damping, relative to the mean diagonal of the Fisher matrix at the start model.
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Stop once the relative misfit decrease of an accepted step falls below this.
    pub tolerance: f64,
    /// Also stop once the chi-square per observed datum falls below this.
    pub misfit_floor: f64,
    pub vs_bounds: (f64, f64),
    /// Largest |dVs| of any layer in one step, km/s.
    pub step_cap: f64,
    pub max_retries: usize,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            initial_damping: 1.0,
            damping_up: 3.0,
            damping_down: 3.0,
            tolerance: 1e-4,
            misfit_floor: 1e-8,
            vs_bounds: (VS_MIN, VS_MAX),
            step_cap: 0.3,
            max_retries: 8,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.vs_bounds;
        if !(VS_MIN <= lo && lo < hi && hi <= VS_MAX) {
            return Err(Error::Config(format!("Vs bounds must lie within [{VS_MIN}, {VS_MAX}]")));
        }
        if !(self.initial_damping > 0.0 && self.damping_up > 1.0 && self.damping_down > 1.0 && self.tolerance > 0.0 && self.misfit_floor >= 0.0 && self.step_cap > 0.0) {
            return Err(Error::Config("damping factors, tolerance and step cap must be positive".into()));
        }
        Ok(())
    }
}

/// Sum over observed channels of `((pred - obs) / sigma)^2`.
pub fn chi_square_misfit(pred: &[f64], obs: &[f64], mask: &[bool], noise: &NoiseModel) -> Result<f64> {
    let n = obs.len();
    if pred.len() != n || mask.len() != n || noise.sigma.len() != n {
        return Err(shape("prediction, observation, mask and noise lengths differ"));
    }
    Ok(pred
        .iter()
        .zip(obs)
        .zip(mask)
        .zip(&noise.sigma)
        .filter(|((_, m), _)| **m)
        .map(|(((p, o), _), s)| ((p - o) / s).powi(2))
        .sum())
}

fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n) {
        return Err(shape("ragged Jacobian"));
    }
    Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

/// `J^T diag(sigma^-2) J` for the observed rows `jacobian`.
pub fn fisher_information(jacobian: &[Vec<f64>], sigma: &[f64]) -> Result<DMatrix<f64>> {
    if jacobian.len() != sigma.len() {
        return Err(shape("Jacobian rows and noise channels differ"));
    }
    let j = to_matrix(jacobian)?;
    let w = DVector::from_iterator(sigma.len(), sigma.iter().map(|s| 1.0 / (s * s)));
    let wj = DMatrix::from_fn(j.nrows(), j.ncols(), |i, k| w[i] * j[(i, k)]);
    let f = j.transpose() * wj;
    // exact symmetry
    Ok(DMatrix::from_fn(f.nrows(), f.ncols(), |a, b| if a <= b { f[(a, b)] } else { f[(b, a)] }))
}

/// Damped Gauss-Newton update solving
/// `(J^T W J + lambda I) dm = J^T W r`, then scaled so `|dm|_inf <= step_cap`.
pub fn gauss_newton_step(jacobian: &[Vec<f64>], residual: &[f64], sigma: &[f64], lambda: f64, step_cap: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0) {
        return Err(domain("damping must be positive"));
    }
    if residual.len() != jacobian.len() || sigma.len() != jacobian.len() {
        return Err(shape("Jacobian, residual and noise lengths differ"));
    }
    let j = to_matrix(jacobian)?;
    let mut a = fisher_information(jacobian, sigma)?;
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    let wr = DVector::from_iterator(residual.len(), residual.iter().zip(sigma).map(|(r, s)| r / (s * s)));
    let b = j.transpose() * wr;
    let chol = a.cholesky().ok_or_else(|| Error::Numerical("damped normal matrix is not positive definite".into()))?;
    let mut dm: Vec<f64> = chol.solve(&b).iter().copied().collect();
    if dm.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite Gauss-Newton step".into()));
    }
    let biggest = dm.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if biggest > step_cap {
        let s = step_cap / biggest;
        dm.iter_mut().for_each(|v| *v *= s);
    }
    Ok(dm)
}

/// Default ridge: `1e-3 * trace(F) / n`.
pub fn default_ridge(fisher: &DMatrix<f64>) -> f64 {
    1e-3 * fisher.trace() / fisher.nrows() as f64
}

/// `scale * sqrt(diag((F + ridge I)^-1))`.
pub fn posterior_sigma(fisher: &DMatrix<f64>, ridge: Option<f64>, scale: f64) -> Result<Vec<f64>> {
    let ridge = ridge.unwrap_or_else(|| default_ridge(fisher));
    if !(ridge > 0.0) || !(scale > 0.0) {
        return Err(domain("ridge and scale must be positive"));
    }
    let mut a = fisher.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += ridge;
    }
    let inv = a
        .cholesky()
        .ok_or_else(|| Error::Numerical("regularized Fisher matrix is singular".into()))?
        .inverse();
    let sigma: Vec<f64> = (0..inv.nrows()).map(|i| scale * inv[(i, i)].sqrt()).collect();
    if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::Numerical("non-finite posterior sigma".into()));
    }
    Ok(sigma)
}

/// Eigenvalue extremes of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionDiagnostics {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub condition_number: f64,
}

pub fn condition_diagnostics(fisher: &DMatrix<f64>) -> ConditionDiagnostics {
    let eig = fisher.clone().symmetric_eigenvalues();
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ConditionDiagnostics {
        min_eigenvalue: min,
        max_eigenvalue: max,
        condition_number: if min > 0.0 { max / min } else { f64::INFINITY },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub misfit: f64,
    pub damping: f64,
    pub rejected_steps: usize,
    pub model: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub final_model: Vec<f64>,
    pub history: Vec<IterationRecord>,
    /// Chi-square after every accepted step, starting with the initial model.
    pub misfit_trace: Vec<f64>,
    pub posterior_sigma: Vec<f64>,
    pub fisher_diagnostics: ConditionDiagnostics,
    pub observed_channels: usize,
    pub converged: bool,
    pub initial_prediction: Vec<f64>,
    pub final_prediction: Vec<f64>,
}

impl InversionResult {
    pub fn final_misfit(&self) -> f64 {
        *self.misfit_trace.last().expect("trace starts with the initial misfit")
    }
}

/// Stacks a Rayleigh and a Love curve into the surrogate's output layout.
pub fn stack_observations(curves: &[DispersionCurve], n_periods: usize) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut obs = vec![0.0; 2 * n_periods];
    let mut mask = vec![false; 2 * n_periods];
    let mut seen = [false; 2];
    for c in curves {
        c.validate()?;
        if c.periods.len() != n_periods {
            return Err(shape(format!("{} curve has {} periods, surrogate expects {n_periods}", c.wave, c.periods.len())));
        }
        if std::mem::replace(&mut seen[c.wave.branch_index()], true) {
            return Err(shape(format!("duplicate {} curve", c.wave)));
        }
        for k in 0..n_periods {
            let i = output_index(c.wave, k, n_periods);
            obs[i] = c.phase_velocity[k];
            mask[i] = c.mask[k];
        }
    }
    Ok((obs, mask))
}

fn clip(model: &mut [f64], (lo, hi): (f64, f64)) {
    model.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
}

/// Fisher matrix of the surrogate at `model` restricted to observed channels.
pub fn surrogate_fisher(surrogate: &Surrogate, model: &[f64], mask: &[bool], noise: &NoiseModel) -> Result<DMatrix<f64>> {
    let jac = surrogate.jacobian(model)?;
    let (rows, sig): (Vec<Vec<f64>>, Vec<f64>) = jac
        .into_iter()
        .zip(mask)
        .zip(&noise.sigma)
        .filter(|((_, m), _)| **m)
        .map(|((row, _), s)| (row, *s))
        .unzip();
    fisher_information(&rows, &sig)
}

/// Levenberg-Marquardt fit of `obs` starting from `initial`.
/// Mean diagonal of `J^T W J` over observed channels; falls back to 1 for a flat Jacobian.
fn mean_fisher_diagonal(surrogate: &Surrogate, model: &[f64], observed: &[usize], noise: &NoiseModel) -> Result<f64> {
    let jac = surrogate.jacobian(model)?;
    let total: f64 = observed.iter().map(|&i| jac[i].iter().map(|g| (g / noise.sigma[i]).powi(2)).sum::<f64>()).sum();
    let mean = total / model.len() as f64;
    Ok(if mean > 0.0 && mean.is_finite() { mean } else { 1.0 })
}

pub fn invert(surrogate: &Surrogate, obs: &[f64], mask: &[bool], initial: &[f64], noise: &NoiseModel, cfg: &InversionConfig) -> Result<InversionResult> {
    cfg.validate()?;
    noise.validate()?;
    let (lo, hi) = cfg.vs_bounds;
    if initial.iter().any(|v| !(lo..=hi).contains(v)) {
        return Err(domain("initial model outside the Vs bounds"));
    }
    let observed: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let mut model = initial.to_vec();
    let mut pred = surrogate.forward(&model)?;
    let initial_prediction = pred.clone();
    let mut misfit = chi_square_misfit(&pred, obs, mask, noise)?;
    let mut lambda = cfg.initial_damping * mean_fisher_diagonal(surrogate, &model, &observed, noise)?;
    let mut trace = vec![misfit];
    let mut history = vec![IterationRecord { iteration: 0, misfit, damping: lambda, rejected_steps: 0, model: model.clone() }];
    let mut converged = false;
    let sig: Vec<f64> = observed.iter().map(|&i| noise.sigma[i]).collect();

    for iteration in 1..=cfg.max_iterations {
        if misfit <= cfg.misfit_floor * observed.len() as f64 {
            converged = true;
            break;
        }
        let jac = surrogate.jacobian(&model)?;
        let rows: Vec<Vec<f64>> = observed.iter().map(|&i| jac[i].clone()).collect();
        let residual: Vec<f64> = observed.iter().map(|&i| obs[i] - pred[i]).collect();
        let mut accepted = None;
        let mut rejected = 0;
        for _ in 0..=cfg.max_retries {
            let step = gauss_newton_step(&rows, &residual, &sig, lambda, cfg.step_cap)?;
            let mut trial: Vec<f64> = model.iter().zip(&step).map(|(m, d)| m + d).collect();
            clip(&mut trial, cfg.vs_bounds);
            let trial_pred = surrogate.forward(&trial)?;
            let trial_misfit = chi_square_misfit(&trial_pred, obs, mask, noise)?;
            if trial_misfit < misfit {
                lambda /= cfg.damping_down;
                accepted = Some((trial, trial_pred, trial_misfit));
                break;
            }
            lambda *= cfg.damping_up;
            rejected += 1;
        }
        let Some((trial, trial_pred, trial_misfit)) = accepted else {
            // no damping level improves the fit: stationary point
            converged = true;
            break;
        };
        let relative = (misfit - trial_misfit) / misfit;
        model = trial;
        pred = trial_pred;
        misfit = trial_misfit;
        trace.push(misfit);
        history.push(IterationRecord { iteration, misfit, damping: lambda, rejected_steps: rejected, model: model.clone() });
        if relative < cfg.tolerance || misfit <= cfg.misfit_floor * observed.len() as f64 {
            converged = true;
            break;
        }
    }

    let fisher = surrogate_fisher(surrogate, &model, mask, noise)?;
    Ok(InversionResult {
        posterior_sigma: posterior_sigma(&fisher, None, 1.0)?,
        fisher_diagnostics: condition_diagnostics(&fisher),
        final_model: model,
        history,
        misfit_trace: trace,
        observed_channels: observed.len(),
        converged,
        initial_prediction,
        final_prediction: pred,
    })
}

/// One inversion with a known answer, for calibration.
#[derive(Debug, Clone)]
pub struct CalibrationCase<'a> {
    pub estimate: &'a [f64],
    pub truth: &'a [f64],
    pub sigma_unscaled: &'a [f64],
}

pub const MIN_CALIBRATION_CASES: usize = 20;

/// Median over layers and cases of `|estimate - truth| / sigma_unscaled`.
pub fn calibrate_sigma_scale(cases: &[CalibrationCase<'_>]) -> Result<f64> {
    if cases.len() < MIN_CALIBRATION_CASES {
        return Err(domain(format!("calibration needs at least {MIN_CALIBRATION_CASES} inversions, got {}", cases.len())));
    }
    let mut ratios = Vec::new();
    for c in cases {
        if c.estimate.len() != c.truth.len() || c.truth.len() != c.sigma_unscaled.len() {
            return Err(shape("calibration case vectors differ in length"));
        }
        ratios.extend(c.estimate.iter().zip(c.truth).zip(c.sigma_unscaled).map(|((e, t), s)| (e - t).abs() / s));
    }
    ratios.sort_by(f64::total_cmp);
    let s = crate::earth_model::quantile_sorted(&ratios, 0.5);
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Numerical("degenerate calibration scale".into()));
    }
    Ok(s)
}

/// Fraction of layers, over all cases, with `|estimate - truth| <= k * scale * sigma`.
pub fn coverage(cases: &[CalibrationCase<'_>], scale: f64, k: f64) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for c in cases {
        for ((e, t), s) in c.estimate.iter().zip(c.truth).zip(c.sigma_unscaled) {
            total += 1;
            if (e - t).abs() <= k * scale * s {
                hit += 1;
            }
        }
    }
    hit as f64 / total.max(1) as f64
}

/// Observed and predicted phase velocities before and after inversion.
#[derive(Debug, Serialize)]
pub struct FitRow {
    pub wave: Wave,
    pub period_s: f64,
    pub observed_km_s: f64,
    pub mask: bool,
    pub initial_km_s: f64,
    pub final_km_s: f64,
}

pub fn fit_rows(result: &InversionResult, obs: &[f64], mask: &[bool], periods: &[f64]) -> Vec<FitRow> {
    let n = periods.len();
    let mut rows = Vec::with_capacity(2 * n);
    for wave in Wave::BOTH {
        for (k, &t) in periods.iter().enumerate() {
            let i = output_index(wave, k, n);
            rows.push(FitRow {
                wave,
                period_s: t,
                observed_km_s: obs[i],
                mask: mask[i],
                initial_km_s: result.initial_prediction[i],
                final_km_s: result.final_prediction[i],
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
    }

    #[test]
    fn misfit_cases() {
        let noise = NoiseModel::uniform(3, 0.01);
        let obs = [3.0, 3.5, 4.0];
        assert_eq!(chi_square_misfit(&obs, &obs, &[true; 3], &noise).unwrap(), 0.0);
        let off = [3.01, 3.5, 4.0];
        assert!((chi_square_misfit(&off, &obs, &[true; 3], &noise).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(chi_square_misfit(&off, &obs, &[false, true, true], &noise).unwrap(), 0.0);
        assert!(matches!(chi_square_misfit(&off, &obs[..2], &[true; 3], &noise), Err(Error::Shape(_))));
    }

    #[test]
    fn identity_system_step() {
        let dm = gauss_newton_step(&eye(4), &[1.0, 0.0, 0.0, 0.0], &[1.0; 4], 1e-12, 10.0).unwrap();
        assert!((dm[0] - 1.0).abs() < 1e-10);
        assert!(dm[1..].iter().all(|v| v.abs() < 1e-12));
        let big = gauss_newton_step(&eye(4), &[1.0, 0.0, 0.0, 0.0], &[1.0; 4], 1e12, 10.0).unwrap();
        assert!(big.iter().all(|v| v.abs() < 1e-11));
        let capped = gauss_newton_step(&eye(4), &[5.0, -2.5, 0.0, 0.0], &[1.0; 4], 1e-12, 1.0).unwrap();
        assert!((capped[0] - 1.0).abs() < 1e-9 && (capped[1] + 0.5).abs() < 1e-9);
        assert!(gauss_newton_step(&eye(2), &[1.0, 0.0], &[1.0; 2], 0.0, 1.0).is_err());
    }

    #[test]
    fn fisher_identity_and_scaling() {
        let f = fisher_information(&eye(3), &[1.0; 3]).unwrap();
        assert_eq!(f, DMatrix::identity(3, 3));
        let j = vec![vec![1.0, 2.0], vec![0.5, -1.0], vec![3.0, 0.1]];
        let f1 = fisher_information(&j, &[0.1; 3]).unwrap();
        let f2 = fisher_information(&j, &[0.2; 3]).unwrap();
        assert!((f1 / 4.0 - f2).amax() < 1e-9);
    }

    #[test]
    fn posterior_sigma_diagonal_case() {
        let f = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0, 100.0]));
        let s = posterior_sigma(&f, Some(0.5), 2.0).unwrap();
        for (si, fi) in s.iter().zip([4.0, 9.0, 100.0]) {
            assert!((si - 2.0 / (fi + 0.5f64).sqrt()).abs() < 1e-12);
        }
        let s2 = posterior_sigma(&f, Some(0.5), 4.0).unwrap();
        for (a, b) in s.iter().zip(&s2) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
        assert!(posterior_sigma(&f, Some(0.0), 1.0).is_err());
    }

    #[test]
    fn calibration_fixed_points() {
        let truth: Vec<f64> = vec![3.0; 5];
        let est: Vec<f64> = vec![3.1, 2.9, 3.2, 2.8, 3.05];
        let err: Vec<f64> = est.iter().zip(&truth).map(|(e, t)| (e - t).abs()).collect();
        let half: Vec<f64> = err.iter().map(|e| e / 2.0).collect();
        let cases: Vec<_> = (0..20).map(|_| CalibrationCase { estimate: &est, truth: &truth, sigma_unscaled: &err }).collect();
        assert!((calibrate_sigma_scale(&cases).unwrap() - 1.0).abs() < 1e-12);
        let cases2: Vec<_> = (0..20).map(|_| CalibrationCase { estimate: &est, truth: &truth, sigma_unscaled: &half }).collect();
        assert!((calibrate_sigma_scale(&cases2).unwrap() - 2.0).abs() < 1e-12);
        assert!(calibrate_sigma_scale(&cases2[..19]).is_err());
    }
}
