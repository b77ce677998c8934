//! One-dimensional layered Earth models and the prior ensembles they are drawn from.
//!
//! Models carry a shear-velocity profile on a fixed depth grid. Compressional
//! velocity and density follow from Vs through a fixed affine coupling, so a
//! model has exactly one free parameter per layer. The half-space below the
//! grid carries its own Vs; models built from a model vector tie it to the
//! deepest layer.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub const VS_MIN: f64 = 0.5;
pub const VS_MAX: f64 = 6.0;

pub const VP_VS_RATIO: f64 = 1.73;
pub const RHO_SLOPE: f64 = 0.32;
pub const RHO_INTERCEPT: f64 = 0.77;

/// Layer count of the standard grid.
pub const STANDARD_LAYERS: usize = 38;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthGrid {
    thicknesses: Vec<f64>,
}

impl DepthGrid {
    pub fn new(thicknesses: Vec<f64>) -> Result<Self> {
        if thicknesses.is_empty() {
            return Err(domain("depth grid needs at least one layer"));
        }
        if let Some(h) = thicknesses.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
            return Err(domain(format!("layer thickness must be positive, got {h}")));
        }
        Ok(Self { thicknesses })
    }

    pub fn thicknesses(&self) -> &[f64] {
        &self.thicknesses
    }

    pub fn len(&self) -> usize {
        self.thicknesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thicknesses.is_empty()
    }

    pub fn layer_top_depths(&self) -> Vec<f64> {
        let mut depth = 0.0;
        self.thicknesses
            .iter()
            .map(|h| {
                let top = depth;
                depth += h;
                top
            })
            .collect()
    }

    pub fn layer_mid_depths(&self) -> Vec<f64> {
        self.layer_top_depths()
            .iter()
            .zip(&self.thicknesses)
            .map(|(top, h)| top + 0.5 * h)
            .collect()
    }

    pub fn total_depth(&self) -> f64 {
        self.thicknesses.iter().sum()
    }
}

/// The fixed 38-layer grid down to 150 km: 10 x 1 km, 10 x 2 km, 12 x 5 km, 6 x 10 km.
pub fn standard_depth_grid() -> DepthGrid {
    let thicknesses = std::iter::repeat_n(1.0, 10)
        .chain(std::iter::repeat_n(2.0, 10))
        .chain(std::iter::repeat_n(5.0, 12))
        .chain(std::iter::repeat_n(10.0, 6))
        .collect();
    DepthGrid { thicknesses }
}

/// Compressional velocity (km/s) and density (g/cm^3) implied by a shear velocity.
pub fn derive_vp_density(vs: f64) -> Result<(f64, f64)> {
    if !(vs.is_finite() && vs > 0.0) {
        return Err(domain(format!("shear velocity must be positive, got {vs}")));
    }
    let vp = VP_VS_RATIO * vs;
    Ok((vp, RHO_SLOPE * vp + RHO_INTERCEPT))
}

fn coupled(vs: f64) -> (f64, f64) {
    let vp = VP_VS_RATIO * vs;
    (vp, RHO_SLOPE * vp + RHO_INTERCEPT)
}

/// Elastic properties of one homogeneous layer or the half-space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Medium {
    pub vs: f64,
    pub vp: f64,
    pub rho: f64,
}

impl Medium {
    pub fn from_vs(vs: f64) -> Self {
        let (vp, rho) = coupled(vs);
        Self { vs, vp, rho }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayeredModel {
    grid: DepthGrid,
    layers: Vec<Medium>,
    halfspace: Medium,
}

impl LayeredModel {
    pub fn new(grid: DepthGrid, vs: &[f64], vs_halfspace: f64) -> Result<Self> {
        if vs.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} layer velocities for a {}-layer grid",
                vs.len(),
                grid.len()
            )));
        }
        for &v in vs.iter().chain(std::iter::once(&vs_halfspace)) {
            if !(VS_MIN..=VS_MAX).contains(&v) {
                return Err(domain(format!("Vs {v} km/s outside [{VS_MIN}, {VS_MAX}]")));
            }
        }
        Ok(Self {
            grid,
            layers: vs.iter().map(|&v| Medium::from_vs(v)).collect(),
            halfspace: Medium::from_vs(vs_halfspace),
        })
    }

    /// Builds a model whose half-space takes the Vs of the deepest layer.
    pub fn from_model_vector(grid: &DepthGrid, vs: &[f64]) -> Result<Self> {
        let last = *vs.last().ok_or_else(|| domain("empty model vector"))?;
        Self::new(grid.clone(), vs, last)
    }

    /// Homogeneous model: every layer and the half-space share one Vs.
    pub fn homogeneous(grid: DepthGrid, vs: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, &vec![vs; n], vs)
    }

    pub fn grid(&self) -> &DepthGrid {
        &self.grid
    }

    pub fn layers(&self) -> &[Medium] {
        &self.layers
    }

    pub fn halfspace(&self) -> Medium {
        self.halfspace
    }

    pub fn vs(&self) -> Vec<f64> {
        self.layers.iter().map(|m| m.vs).collect()
    }

    pub fn vp(&self) -> Vec<f64> {
        self.layers.iter().map(|m| m.vp).collect()
    }

    pub fn rho(&self) -> Vec<f64> {
        self.layers.iter().map(|m| m.rho).collect()
    }

    pub fn vs_halfspace(&self) -> f64 {
        self.halfspace.vs
    }

    /// Minimum Vs over layers and half-space.
    pub fn min_vs(&self) -> f64 {
        self.layers
            .iter()
            .map(|m| m.vs)
            .fold(self.halfspace.vs, f64::min)
    }

    /// Returns a copy with layer `index` shifted by `delta` km/s (Vp and density follow).
    /// Shifting the deepest layer also shifts the half-space.
    pub(crate) fn perturbed(&self, index: usize, delta: f64) -> Self {
        let mut out = self.clone();
        out.layers[index] = Medium::from_vs(self.layers[index].vs + delta);
        if index + 1 == self.layers.len() {
            out.halfspace = Medium::from_vs(self.halfspace.vs + delta);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Weak,
    StrongLvz,
}

impl std::fmt::Display for PriorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PriorKind::Weak => "weak",
            PriorKind::StrongLvz => "strong_lvz",
        })
    }
}

impl std::str::FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weak" => Ok(PriorKind::Weak),
            "strong_lvz" | "strong-lvz" => Ok(PriorKind::StrongLvz),
            other => Err(Error::Config(format!("unknown prior kind '{other}'"))),
        }
    }
}

/// Vs range sampled uniformly at one control depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub depth_km: f64,
    pub vs_lo: f64,
    pub vs_hi: f64,
}

const WEAK_CONTROLS: [ControlPoint; 6] = [
    ControlPoint { depth_km: 0.0, vs_lo: 2.0, vs_hi: 3.6 },
    ControlPoint { depth_km: 10.0, vs_lo: 2.8, vs_hi: 4.0 },
    ControlPoint { depth_km: 30.0, vs_lo: 3.2, vs_hi: 4.4 },
    ControlPoint { depth_km: 60.0, vs_lo: 3.8, vs_hi: 4.8 },
    ControlPoint { depth_km: 100.0, vs_lo: 4.0, vs_hi: 5.0 },
    ControlPoint { depth_km: 150.0, vs_lo: 4.2, vs_hi: 5.2 },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub kind: PriorKind,
    pub moho_depth_mean: f64,
    pub moho_depth_sd: f64,
    pub moho_depth_clip: (f64, f64),
    pub lvz_center_mean: f64,
    pub lvz_center_sd: f64,
    pub lvz_center_clip: (f64, f64),
    /// e-folding half-width of the Gaussian velocity reduction, km.
    pub lvz_half_width: f64,
    pub lvz_reduction_range: (f64, f64),
    pub control_depth_count: usize,
    pub controls: Vec<ControlPoint>,
    /// Standard deviation of the independent per-layer perturbation, km/s.
    pub layer_noise_sd: f64,
}

impl PriorConfig {
    pub fn weak() -> Self {
        Self {
            kind: PriorKind::Weak,
            ..Self::strong_lvz()
        }
    }

    pub fn strong_lvz() -> Self {
        Self {
            kind: PriorKind::StrongLvz,
            moho_depth_mean: 40.0,
            moho_depth_sd: 5.0,
            moho_depth_clip: (25.0, 55.0),
            lvz_center_mean: 70.0,
            lvz_center_sd: 8.0,
            lvz_center_clip: (55.0, 90.0),
            lvz_half_width: 15.0,
            lvz_reduction_range: (0.05, 0.10),
            control_depth_count: WEAK_CONTROLS.len(),
            controls: WEAK_CONTROLS.to_vec(),
            layer_noise_sd: 0.05,
        }
    }

    pub fn for_kind(kind: PriorKind) -> Self {
        match kind {
            PriorKind::Weak => Self::weak(),
            PriorKind::StrongLvz => Self::strong_lvz(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.controls.len() != self.control_depth_count || self.controls.len() < 2 {
            return cfg("control depth count does not match control table".into());
        }
        if self.controls.windows(2).any(|w| w[1].depth_km <= w[0].depth_km) {
            return cfg("control depths must be strictly increasing".into());
        }
        for c in &self.controls {
            if !(VS_MIN <= c.vs_lo && c.vs_lo <= c.vs_hi && c.vs_hi <= VS_MAX) {
                return cfg(format!("bad Vs range at {} km", c.depth_km));
            }
        }
        if self.layer_noise_sd < 0.0 || self.moho_depth_sd < 0.0 || self.lvz_center_sd < 0.0 {
            return cfg("standard deviations must be non-negative".into());
        }
        if self.kind == PriorKind::StrongLvz {
            let (lo, hi) = self.lvz_reduction_range;
            if !(0.0 < lo && lo <= hi && hi < 0.3) {
                return cfg("LVZ reduction fractions must lie in (0, 0.3)".into());
            }
            if self.lvz_half_width <= 0.0 {
                return cfg("LVZ half-width must be positive".into());
            }
        }
        Ok(())
    }
}

fn interpolate_controls(controls: &[ControlPoint], values: &[f64], depth: f64) -> f64 {
    let last = controls.len() - 1;
    if depth <= controls[0].depth_km {
        return values[0];
    }
    if depth >= controls[last].depth_km {
        return values[last];
    }
    let k = controls.windows(2).position(|w| depth < w[1].depth_km).unwrap_or(last - 1);
    let (z0, z1) = (controls[k].depth_km, controls[k + 1].depth_km);
    let t = (depth - z0) / (z1 - z0);
    values[k] + t * (values[k + 1] - values[k])
}

fn sample_base<R: Rng + ?Sized>(rng: &mut R, grid: &DepthGrid, cfg: &PriorConfig) -> Vec<f64> {
    let values: Vec<f64> = cfg
        .controls
        .iter()
        .map(|c| {
            if c.vs_hi > c.vs_lo {
                rng.random_range(c.vs_lo..c.vs_hi)
            } else {
                c.vs_lo
            }
        })
        .collect();
    let noise = Normal::new(0.0, cfg.layer_noise_sd).expect("non-negative sd");
    grid.layer_mid_depths()
        .iter()
        .map(|&z| {
            let v = interpolate_controls(&cfg.controls, &values, z) + noise.sample(rng);
            v.clamp(VS_MIN, VS_MAX)
        })
        .collect()
}

/// Broad prior with no imposed structure.
pub fn sample_weak_prior<R: Rng + ?Sized>(rng: &mut R, grid: &DepthGrid) -> LayeredModel {
    let vs = sample_base(rng, grid, &PriorConfig::weak());
    LayeredModel::from_model_vector(grid, &vs).expect("sampler respects bounds")
}

/// One strong-LVZ draw together with its structural parameters.
#[derive(Debug, Clone)]
pub struct LvzDraw {
    pub model: LayeredModel,
    pub moho_depth: f64,
    pub lvz_center: f64,
    pub reduction: f64,
    /// Base draws rejected because the imposed reduction did not produce a
    /// velocity minimum below the lid. The center is never redrawn.
    pub rejected: usize,
}

fn clipped_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, clip: (f64, f64)) -> f64 {
    let x = if sd > 0.0 {
        Normal::new(mean, sd).expect("positive sd").sample(rng)
    } else {
        mean
    };
    x.clamp(clip.0, clip.1)
}

/// True when the minimum Vs among layers whose tops lie in `[lo, hi)` km is
/// strictly below the Vs of the layer ending at `lo`.
pub fn has_lvz(model: &LayeredModel, window: (f64, f64)) -> bool {
    let tops = model.grid().layer_top_depths();
    let vs = model.vs();
    let Some(first) = tops.iter().position(|&t| t >= window.0) else {
        return false;
    };
    if first == 0 {
        return false;
    }
    let lid = vs[first - 1];
    tops.iter()
        .zip(&vs)
        .filter(|(t, _)| **t >= window.0 && **t < window.1)
        .any(|(_, v)| *v < lid)
}

const MAX_LVZ_ATTEMPTS: usize = 10_000;

pub fn sample_strong_lvz_with_params<R: Rng + ?Sized>(
    rng: &mut R,
    grid: &DepthGrid,
    cfg: &PriorConfig,
) -> Result<LvzDraw> {
    if cfg.kind != PriorKind::StrongLvz {
        return Err(Error::Config(format!("strong-LVZ sampler called with prior kind {}", cfg.kind)));
    }
    cfg.validate()?;
    let mids = grid.layer_mid_depths();
    // The center is drawn once so that its distribution is exactly the
    // clipped normal; only the base, Moho and amplitude are redrawn.
    let center = clipped_normal(rng, cfg.lvz_center_mean, cfg.lvz_center_sd, cfg.lvz_center_clip);
    for attempt in 0..MAX_LVZ_ATTEMPTS {
        let mut vs = sample_base(rng, grid, cfg);
        let moho = clipped_normal(rng, cfg.moho_depth_mean, cfg.moho_depth_sd, cfg.moho_depth_clip);
        let (r_lo, r_hi) = cfg.lvz_reduction_range;
        let reduction = if r_hi > r_lo { rng.random_range(r_lo..r_hi) } else { r_lo };

        let mut running = f64::NEG_INFINITY;
        for (v, &z) in vs.iter_mut().zip(&mids) {
            if z >= moho {
                break;
            }
            running = running.max(*v);
            *v = running;
        }
        for (v, &z) in vs.iter_mut().zip(&mids) {
            let u = (z - center) / cfg.lvz_half_width;
            *v = (*v * (1.0 - reduction * (-u * u).exp())).clamp(VS_MIN, VS_MAX);
        }
        let model = LayeredModel::from_model_vector(grid, &vs)?;
        if has_lvz(&model, cfg.lvz_center_clip) {
            return Ok(LvzDraw { model, moho_depth: moho, lvz_center: center, reduction, rejected: attempt });
        }
    }
    Err(Error::Numerical("strong-LVZ sampler failed to produce an LVZ".into()))
}

/// Weak-prior base with a monotone crust above a random Moho and a Gaussian
/// upper-mantle low-velocity zone.
pub fn sample_strong_lvz_prior<R: Rng + ?Sized>(
    rng: &mut R,
    grid: &DepthGrid,
    cfg: &PriorConfig,
) -> Result<LayeredModel> {
    sample_strong_lvz_with_params(rng, grid, cfg).map(|d| d.model)
}

pub fn sample_model<R: Rng + ?Sized>(rng: &mut R, grid: &DepthGrid, cfg: &PriorConfig) -> Result<LayeredModel> {
    match cfg.kind {
        PriorKind::Weak => Ok(LayeredModel::from_model_vector(grid, &sample_base(rng, grid, cfg))?),
        PriorKind::StrongLvz => sample_strong_lvz_prior(rng, grid, cfg),
    }
}

/// Empirical quantile with linear interpolation between order statistics
/// (`h = (n - 1) p`). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-layer Vs percentiles. Result is indexed `[prob][layer]`.
pub fn ensemble_percentiles(models: &[LayeredModel], probs: &[f64]) -> Result<Vec<Vec<f64>>> {
    let first = models.first().ok_or(Error::EmptyEnsemble)?;
    if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(domain(format!("percentile probability {p} outside (0, 1)")));
    }
    let n_layers = first.grid().len();
    if models.iter().any(|m| m.grid().len() != n_layers) {
        return Err(Error::Shape("ensemble mixes grids".into()));
    }
    let mut out = vec![vec![0.0; n_layers]; probs.len()];
    let mut column = Vec::with_capacity(models.len());
    for layer in 0..n_layers {
        column.clear();
        column.extend(models.iter().map(|m| m.layers()[layer].vs));
        column.sort_by(f64::total_cmp);
        for (row, &p) in out.iter_mut().zip(probs) {
            row[layer] = quantile_sorted(&column, p);
        }
    }
    Ok(out)
}

/// One line of a model-ensemble file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub seed: u64,
    pub prior: PriorKind,
    /// Layer Vs values followed by the half-space Vs.
    pub vs: Vec<f64>,
}

impl EnsembleRecord {
    pub fn from_model(seed: u64, prior: PriorKind, model: &LayeredModel) -> Self {
        let mut vs = model.vs();
        vs.push(model.vs_halfspace());
        Self { seed, prior, vs }
    }

    pub fn to_model(&self, grid: &DepthGrid) -> Result<LayeredModel> {
        let n = grid.len();
        if self.vs.len() != n + 1 {
            return Err(Error::Shape(format!("record has {} values, expected {}", self.vs.len(), n + 1)));
        }
        LayeredModel::new(grid.clone(), &self.vs[..n], self.vs[n])
    }
}

pub fn write_ensemble<W: Write>(mut out: W, records: &[EnsembleRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_ensemble<R: BufRead>(input: R) -> Result<Vec<EnsembleRecord>> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line)
            .map_err(|e| Error::Config(format!("ensemble line {}: {e}", i + 1)))?;
        records.push(r);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn standard_grid_layout() {
        let g = standard_depth_grid();
        assert_eq!(g.len(), 38);
        assert_eq!(g.total_depth(), 150.0);
        let tops = g.layer_top_depths();
        assert_eq!(tops[10], 10.0);
        assert_eq!(tops[20], 30.0);
        assert_eq!(tops[32], 90.0);
    }

    #[test]
    fn vp_density_coupling() {
        let (vp, rho) = derive_vp_density(3.0).unwrap();
        assert!((vp - 5.19).abs() < 1e-12);
        assert!((rho - 2.4308).abs() < 1e-12);
        let (vp, rho) = derive_vp_density(4.5).unwrap();
        assert!((vp - 7.785).abs() < 1e-12);
        assert!((rho - 3.2612).abs() < 1e-12);
        assert!(matches!(derive_vp_density(0.0), Err(Error::Domain(_))));
        assert!(matches!(derive_vp_density(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn model_rejects_out_of_bounds() {
        let g = standard_depth_grid();
        assert!(LayeredModel::homogeneous(g.clone(), 6.5).is_err());
        assert!(LayeredModel::homogeneous(g.clone(), 0.4).is_err());
        assert!(LayeredModel::new(g, &[3.0; 5], 3.0).is_err());
    }

    #[test]
    fn weak_prior_is_deterministic_and_bounded() {
        let g = standard_depth_grid();
        let a = sample_weak_prior(&mut rng::stream(1, rng::purpose::MODEL, 0), &g);
        let b = sample_weak_prior(&mut rng::stream(1, rng::purpose::MODEL, 0), &g);
        assert_eq!(a, b);
        assert_eq!(a.vs_halfspace(), *a.vs().last().unwrap());
        for v in a.vs() {
            assert!((VS_MIN..=VS_MAX).contains(&v));
        }
    }

    #[test]
    fn strong_sampler_rejects_weak_config() {
        let g = standard_depth_grid();
        let mut r = rng::stream(1, rng::purpose::MODEL, 0);
        assert!(matches!(
            sample_strong_lvz_prior(&mut r, &g, &PriorConfig::weak()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn strong_lvz_has_velocity_minimum_below_lid() {
        let g = standard_depth_grid();
        let cfg = PriorConfig::strong_lvz();
        for i in 0..500 {
            let d = sample_strong_lvz_with_params(&mut rng::stream(3, rng::purpose::MODEL, i), &g, &cfg).unwrap();
            assert!(has_lvz(&d.model, (55.0, 90.0)));
            assert!((55.0..=90.0).contains(&d.lvz_center));
            assert!((25.0..=55.0).contains(&d.moho_depth));
            // crust is non-decreasing above the Moho before the LVZ is applied;
            // the LVZ taper is negligible in the top 10 km
            let vs = d.model.vs();
            for k in 0..9 {
                assert!(vs[k + 1] >= vs[k] * (1.0 - 1e-3) || g.layer_mid_depths()[k + 1] >= d.moho_depth);
            }
        }
    }

    #[test]
    fn percentile_median_of_three() {
        let g = DepthGrid::new(vec![1.0]).unwrap();
        let models: Vec<_> = [2.0, 4.0, 3.0]
            .iter()
            .map(|&v| LayeredModel::new(g.clone(), &[v], 4.5).unwrap())
            .collect();
        let p = ensemble_percentiles(&models, &[0.5]).unwrap();
        assert_eq!(p[0][0], 3.0);
        assert!(matches!(ensemble_percentiles(&[], &[0.5]), Err(Error::EmptyEnsemble)));
        assert!(ensemble_percentiles(&models, &[1.0]).is_err());
    }

    #[test]
    fn percentiles_of_identical_models() {
        let g = standard_depth_grid();
        let m = sample_weak_prior(&mut rng::stream(9, rng::purpose::MODEL, 0), &g);
        let models = vec![m.clone(); 100];
        let p = ensemble_percentiles(&models, &[0.1, 0.25, 0.75, 0.9]).unwrap();
        for row in p {
            assert_eq!(row, m.vs());
        }
    }

    #[test]
    fn ensemble_file_round_trip() {
        let g = standard_depth_grid();
        let records: Vec<_> = (0..5)
            .map(|i| {
                let m = sample_weak_prior(&mut rng::stream(2, rng::purpose::MODEL, i), &g);
                EnsembleRecord::from_model(i, PriorKind::Weak, &m)
            })
            .collect();
        let mut buf = Vec::new();
        write_ensemble(&mut buf, &records).unwrap();
        let back = read_ensemble(buf.as_slice()).unwrap();
        assert_eq!(back, records);
        assert_eq!(back[0].vs.len(), 39);
        assert_eq!(back[1].to_model(&g).unwrap().vs(), records[1].vs[..38].to_vec());
    }
}
