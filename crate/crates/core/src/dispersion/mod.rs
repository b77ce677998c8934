//! Fundamental-mode Rayleigh and Love phase velocities of layered models.
//!
//! Phase velocities are located by scanning the secular function upward from
//! a lower velocity bound in fixed steps and refining the first sign change.
//! The first sign change is the lowest-velocity root, i.e. the fundamental mode.

mod love;
mod rayleigh;
mod roots;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::earth_model::LayeredModel;
use crate::error::{domain, Error, Result};

pub const MIN_PERIOD: f64 = 2.0;
pub const MAX_PERIOD: f64 = 60.0;
pub const STANDARD_PERIOD_COUNT: usize = 40;

/// Velocity increment of the root scan, km/s.
pub const SCAN_STEP: f64 = 0.005;
/// Half-width of the final root bracket, km/s.
pub const ROOT_TOLERANCE: f64 = 1e-11;
/// Distance to a layer velocity at which the secular function is treated as singular.
pub const SINGULARITY_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wave {
    Rayleigh,
    Love,
}

impl Wave {
    pub const BOTH: [Wave; 2] = [Wave::Rayleigh, Wave::Love];

    /// Offset of this branch in the stacked (Rayleigh, Love) output layout.
    pub fn branch_index(self) -> usize {
        match self {
            Wave::Rayleigh => 0,
            Wave::Love => 1,
        }
    }
}

impl std::fmt::Display for Wave {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Wave::Rayleigh => "rayleigh",
            Wave::Love => "love",
        })
    }
}

impl std::str::FromStr for Wave {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rayleigh" => Ok(Wave::Rayleigh),
            "love" => Ok(Wave::Love),
            other => Err(domain(format!("unknown wave type '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodGrid {
    periods: Vec<f64>,
}

impl PeriodGrid {
    pub fn new(periods: Vec<f64>) -> Result<Self> {
        if periods.is_empty() {
            return Err(domain("period grid is empty"));
        }
        if periods.windows(2).any(|w| w[1] <= w[0]) {
            return Err(domain("periods must be strictly increasing"));
        }
        if periods[0] < MIN_PERIOD || periods[periods.len() - 1] > MAX_PERIOD {
            return Err(domain(format!("periods must lie in [{MIN_PERIOD}, {MAX_PERIOD}] s")));
        }
        Ok(Self { periods })
    }

    /// `count` log-spaced periods from 2 to 60 s inclusive.
    pub fn log_spaced(count: usize) -> Result<Self> {
        if count < 2 {
            return Err(domain("log-spaced grid needs at least two periods"));
        }
        let ratio = (MAX_PERIOD / MIN_PERIOD).ln();
        let mut periods: Vec<f64> = (0..count)
            .map(|i| MIN_PERIOD * (ratio * i as f64 / (count - 1) as f64).exp())
            .collect();
        periods[0] = MIN_PERIOD;
        periods[count - 1] = MAX_PERIOD;
        Self::new(periods)
    }

    pub fn standard() -> Self {
        Self::log_spaced(STANDARD_PERIOD_COUNT).expect("valid standard grid")
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionCurve {
    pub wave: Wave,
    pub periods: PeriodGrid,
    pub phase_velocity: Vec<f64>,
    pub mask: Vec<bool>,
}

impl DispersionCurve {
    pub fn validate(&self) -> Result<()> {
        let n = self.periods.len();
        if self.phase_velocity.len() != n || self.mask.len() != n {
            return Err(Error::Shape(format!(
                "curve arrays have lengths {}/{}/{}",
                n,
                self.phase_velocity.len(),
                self.mask.len()
            )));
        }
        for (&c, &m) in self.phase_velocity.iter().zip(&self.mask) {
            if m && !(c > 0.5 && c < 8.0) {
                return Err(domain(format!("observed phase velocity {c} km/s outside (0.5, 8.0)")));
            }
        }
        Ok(())
    }
}

fn check_singular(model: &LayeredModel, c: f64, include_vp: bool) -> Result<()> {
    let hs = model.halfspace();
    for m in model.layers().iter().chain(std::iter::once(&hs)) {
        if (c - m.vs).abs() < SINGULARITY_GUARD || (include_vp && (c - m.vp).abs() < SINGULARITY_GUARD) {
            return Err(Error::EvaluationSingularity { c });
        }
    }
    Ok(())
}

fn check_args(period: f64, c: f64) -> Result<()> {
    if !(period.is_finite() && period > 0.0) {
        return Err(domain(format!("period must be positive, got {period}")));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(domain(format!("trial velocity must be positive, got {c}")));
    }
    Ok(())
}

/// Rayleigh secular function at trial phase velocity `c` (km/s) and `period` (s).
pub fn rayleigh_dispersion_function(model: &LayeredModel, period: f64, c: f64) -> Result<f64> {
    check_args(period, c)?;
    check_singular(model, c, true)?;
    Ok(rayleigh::secular(model, std::f64::consts::TAU / period, c))
}

/// Love secular function at trial phase velocity `c` (km/s) and `period` (s).
pub fn love_dispersion_function(model: &LayeredModel, period: f64, c: f64) -> Result<f64> {
    check_args(period, c)?;
    check_singular(model, c, false)?;
    Ok(love::secular(model, std::f64::consts::TAU / period, c))
}

pub fn dispersion_function(model: &LayeredModel, period: f64, wave: Wave, c: f64) -> Result<f64> {
    match wave {
        Wave::Rayleigh => rayleigh_dispersion_function(model, period, c),
        Wave::Love => love_dispersion_function(model, period, c),
    }
}

/// Evaluates the secular function, stepping off layer-velocity singularities.
fn eval_nudged(model: &LayeredModel, period: f64, wave: Wave, c: f64) -> Result<f64> {
    for shift in [0.0, 2.0 * SINGULARITY_GUARD, -2.0 * SINGULARITY_GUARD, 4.0 * SINGULARITY_GUARD] {
        match dispersion_function(model, period, wave, c + shift) {
            Err(Error::EvaluationSingularity { .. }) => continue,
            other => return other,
        }
    }
    Err(Error::EvaluationSingularity { c })
}

/// Velocity interval scanned for the fundamental mode.
pub fn scan_range(model: &LayeredModel, wave: Wave) -> (f64, f64) {
    let hi = model.vs_halfspace() * 0.9999;
    let lo = match wave {
        Wave::Rayleigh => 0.70 * model.min_vs(),
        Wave::Love => model.min_vs() * 1.0001,
    };
    (lo, hi)
}

fn check_period(period: f64) -> Result<()> {
    if !(MIN_PERIOD..=MAX_PERIOD).contains(&period) {
        return Err(domain(format!("period {period} s outside [{MIN_PERIOD}, {MAX_PERIOD}]")));
    }
    Ok(())
}

fn refine(model: &LayeredModel, period: f64, wave: Wave, lo: f64, hi: f64, flo: f64, fhi: f64) -> Result<f64> {
    roots::brent(|c| eval_nudged(model, period, wave, c), lo, hi, flo, fhi, ROOT_TOLERANCE)
}

/// Fundamental-mode phase velocity (km/s) at `period` (s).
pub fn phase_velocity(model: &LayeredModel, period: f64, wave: Wave) -> Result<f64> {
    check_period(period)?;
    let (lo, hi) = scan_range(model, wave);
    if lo >= hi {
        return Err(Error::NoRoot { wave, period });
    }
    let steps = ((hi - lo) / SCAN_STEP).ceil() as usize;
    let mut c_prev = lo;
    let mut f_prev = eval_nudged(model, period, wave, lo)?;
    if f_prev == 0.0 {
        return Ok(lo);
    }
    for j in 1..=steps {
        let c = if j == steps { hi } else { lo + j as f64 * SCAN_STEP };
        let f = eval_nudged(model, period, wave, c)?;
        if f == 0.0 {
            return Ok(c);
        }
        if (f > 0.0) != (f_prev > 0.0) {
            return refine(model, period, wave, c_prev, c, f_prev, f);
        }
        c_prev = c;
        f_prev = f;
    }
    Err(Error::NoRoot { wave, period })
}

/// Phase velocity of a slightly perturbed model, bracketed around the root
/// `hint` of the unperturbed model. Falls back to the full scan when no sign
/// change is found nearby.
pub(crate) fn phase_velocity_near(model: &LayeredModel, period: f64, wave: Wave, hint: f64, radius: f64) -> Result<f64> {
    check_period(period)?;
    let (scan_lo, scan_hi) = scan_range(model, wave);
    let mut w = radius.max(1e-4);
    while w <= 0.05 {
        let lo = (hint - w).max(scan_lo);
        let hi = (hint + w).min(scan_hi);
        if lo < hi {
            let flo = eval_nudged(model, period, wave, lo)?;
            let fhi = eval_nudged(model, period, wave, hi)?;
            if flo == 0.0 {
                return Ok(lo);
            }
            if (flo > 0.0) != (fhi > 0.0) {
                return refine(model, period, wave, lo, hi, flo, fhi);
            }
        }
        w *= 4.0;
    }
    phase_velocity(model, period, wave)
}

/// Phase velocities at every period of `grid`; the mask is all true.
pub fn dispersion_curve(model: &LayeredModel, grid: &PeriodGrid, wave: Wave) -> Result<DispersionCurve> {
    let mut velocities = Vec::with_capacity(grid.len());
    for &t in grid.periods() {
        velocities.push(phase_velocity(model, t, wave)?);
    }
    Ok(DispersionCurve {
        wave,
        periods: grid.clone(),
        phase_velocity: velocities,
        mask: vec![true; grid.len()],
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    wave: Wave,
    period_s: f64,
    phase_velocity_km_s: f64,
    mask: bool,
}

/// Writes curves as CSV with columns `wave,period_s,phase_velocity_km_s,mask`.
pub fn write_curves_csv<W: Write>(out: W, curves: &[DispersionCurve]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for curve in curves {
        for ((&t, &c), &m) in curve.periods.periods().iter().zip(&curve.phase_velocity).zip(&curve.mask) {
            w.serialize(CurveRow { wave: curve.wave, period_s: t, phase_velocity_km_s: c, mask: m })
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads curves written by [`write_curves_csv`]. Consecutive rows of the same
/// wave with increasing period form one curve.
pub fn read_curves_csv<R: Read>(input: R) -> Result<Vec<DispersionCurve>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut curves = Vec::new();
    let mut current: Option<(Wave, Vec<f64>, Vec<f64>, Vec<bool>)> = None;
    for row in rdr.deserialize::<CurveRow>() {
        let row = row.map_err(csv_err)?;
        let continues = matches!(&current, Some((w, t, _, _)) if *w == row.wave && t.last().is_some_and(|&last| row.period_s > last));
        if !continues {
            if let Some(done) = current.take() {
                curves.push(finish_curve(done)?);
            }
            current = Some((row.wave, Vec::new(), Vec::new(), Vec::new()));
        }
        let (_, t, c, m) = current.as_mut().expect("set above");
        t.push(row.period_s);
        c.push(row.phase_velocity_km_s);
        m.push(row.mask);
    }
    if let Some(done) = current {
        curves.push(finish_curve(done)?);
    }
    Ok(curves)
}

fn finish_curve((wave, t, c, m): (Wave, Vec<f64>, Vec<f64>, Vec<bool>)) -> Result<DispersionCurve> {
    let curve = DispersionCurve { wave, periods: PeriodGrid::new(t)?, phase_velocity: c, mask: m };
    curve.validate()?;
    Ok(curve)
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Config(format!("csv: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::earth_model::{standard_depth_grid, DepthGrid};

    #[test]
    fn standard_period_grid() {
        let g = PeriodGrid::standard();
        assert_eq!(g.len(), 40);
        assert_eq!(g.periods()[0], 2.0);
        assert_eq!(g.periods()[39], 60.0);
        assert!(PeriodGrid::new(vec![1.0, 3.0]).is_err());
        assert!(PeriodGrid::new(vec![3.0, 3.0]).is_err());
    }

    #[test]
    fn singular_trial_velocity_is_reported() {
        let g = DepthGrid::new(vec![10.0]).unwrap();
        let m = LayeredModel::new(g, &[3.0], 4.0).unwrap();
        assert!(matches!(love_dispersion_function(&m, 10.0, 3.0), Err(Error::EvaluationSingularity { .. })));
        assert!(matches!(
            rayleigh_dispersion_function(&m, 10.0, 1.73 * 3.0),
            Err(Error::EvaluationSingularity { .. })
        ));
        assert!(rayleigh_dispersion_function(&m, 10.0, 3.0 + 1e-6).is_ok());
    }

    #[test]
    fn secular_functions_are_deterministic() {
        let m = LayeredModel::homogeneous(standard_depth_grid(), 3.5).unwrap();
        let a = rayleigh_dispersion_function(&m, 7.0, 3.1).unwrap();
        let b = rayleigh_dispersion_function(&m, 7.0, 3.1).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn love_needs_a_velocity_contrast() {
        let m = LayeredModel::homogeneous(standard_depth_grid(), 3.0).unwrap();
        assert!(matches!(phase_velocity(&m, 10.0, Wave::Love), Err(Error::NoRoot { .. })));
    }

    #[test]
    fn period_outside_band_is_rejected() {
        let m = LayeredModel::homogeneous(standard_depth_grid(), 3.0).unwrap();
        assert!(matches!(phase_velocity(&m, 1.0, Wave::Rayleigh), Err(Error::Domain(_))));
    }

    #[test]
    fn curve_csv_round_trip() {
        let g = DepthGrid::new(vec![10.0]).unwrap();
        let m = LayeredModel::new(g, &[3.0], 4.0).unwrap();
        let grid = PeriodGrid::log_spaced(5).unwrap();
        let curves = vec![
            dispersion_curve(&m, &grid, Wave::Rayleigh).unwrap(),
            dispersion_curve(&m, &grid, Wave::Love).unwrap(),
        ];
        let mut buf = Vec::new();
        write_curves_csv(&mut buf, &curves).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("wave,period_s,phase_velocity_km_s,mask\n"));
        assert_eq!(read_curves_csv(buf.as_slice()).unwrap(), curves);
    }
}
