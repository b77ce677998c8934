//! Agreement metrics between surrogate and reference predictions and kernels.
//!
//! Dispersion accuracy is summarized per period band by MAE and MAPE over
//! (prediction, truth) pairs. Kernel agreement is the cosine similarity and
//! Pearson correlation of each (sample, period) kernel pair, averaged over
//! the band. Bands are half-open `[lo, hi)` except the last, which is closed.

use std::io::Write;

use serde::Serialize;

use crate::dispersion::{csv_err, Wave};
use crate::earth_model::DepthGrid;
use crate::error::{domain, shape, Result};

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(shape(format!("vector lengths {} and {} differ", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(shape("empty vectors"));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Mean absolute percentage error, in percent.
pub fn mape(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    if truth.contains(&0.0) {
        return Err(domain("MAPE undefined for zero truth values"));
    }
    Ok(100.0 * pred.iter().zip(truth).map(|(p, t)| ((p - t) / t).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(domain("cosine similarity of a zero vector"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Pearson correlation (cosine similarity of the centered vectors).
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    if a.len() < 2 {
        return Err(domain("correlation needs at least two points"));
    }
    let center = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| x - m).collect::<Vec<_>>()
    };
    let (ca, cb) = (center(a), center(b));
    if ca.iter().all(|x| *x == 0.0) || cb.iter().all(|x| *x == 0.0) {
        return Err(domain("correlation of a constant vector"));
    }
    cosine_similarity(&ca, &cb)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

pub const STANDARD_BANDS: [Band; 6] = [
    Band { lo: 2.0, hi: 5.0 },
    Band { lo: 5.0, hi: 10.0 },
    Band { lo: 10.0, hi: 20.0 },
    Band { lo: 20.0, hi: 30.0 },
    Band { lo: 30.0, hi: 45.0 },
    Band { lo: 45.0, hi: 60.0 },
];

impl Band {
    pub fn label(&self) -> String {
        format!("{}-{}", self.lo, self.hi)
    }
}

/// Index of the band containing `period`; the last band includes its upper edge.
pub fn band_index(bands: &[Band], period: f64) -> Result<usize> {
    let last = bands.len().checked_sub(1).ok_or_else(|| domain("no bands"))?;
    bands
        .iter()
        .enumerate()
        .position(|(i, b)| period >= b.lo && (period < b.hi || (i == last && period <= b.hi)))
        .ok_or_else(|| domain(format!("period {period} s outside the band set")))
}

/// One (sample, wave, period) comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodRecord {
    pub wave: Wave,
    pub period: f64,
    /// Predicted and reference phase velocity, km/s.
    pub dispersion: Option<(f64, f64)>,
    /// Surrogate and reference kernels.
    pub kernels: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandReport {
    pub wave: Wave,
    pub band: Band,
    pub mae: f64,
    pub mape: f64,
    pub cosine: f64,
    pub correlation: f64,
    pub n: usize,
}

/// Aggregates records per (wave, band). Bands without records are omitted.
/// Metrics with no contributing pairs are NaN.
pub fn band_report(records: &[PeriodRecord], bands: &[Band]) -> Result<Vec<BandReport>> {
    #[derive(Default, Clone)]
    struct Acc {
        n: usize,
        abs: f64,
        pct: f64,
        n_disp: usize,
        cos: f64,
        corr: f64,
        n_kern: usize,
    }
    let mut acc = vec![vec![Acc::default(); bands.len()]; 2];
    for r in records {
        let b = band_index(bands, r.period)?;
        let a = &mut acc[r.wave.branch_index()][b];
        a.n += 1;
        if let Some((p, t)) = r.dispersion {
            a.abs += mae(&[p], &[t])?;
            a.pct += mape(&[p], &[t])?;
            a.n_disp += 1;
        }
        if let Some((s, t)) = &r.kernels {
            a.cos += cosine_similarity(s, t)?;
            a.corr += pearson(s, t)?;
            a.n_kern += 1;
        }
    }
    let mean = |sum: f64, n: usize| if n > 0 { sum / n as f64 } else { f64::NAN };
    let mut out = Vec::new();
    for wave in Wave::BOTH {
        for (band, a) in bands.iter().zip(&acc[wave.branch_index()]) {
            if a.n == 0 {
                continue;
            }
            out.push(BandReport {
                wave,
                band: *band,
                mae: mean(a.abs, a.n_disp),
                mape: mean(a.pct, a.n_disp),
                cosine: mean(a.cos, a.n_kern),
                correlation: mean(a.corr, a.n_kern),
                n: a.n,
            });
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct BandRow {
    wave: Wave,
    period_s: String,
    mae: f64,
    mape_percent: f64,
    cosine: f64,
    correlation: f64,
    n: usize,
}

/// Table-shaped CSV: `wave,period_s,mae,mape_percent,cosine,correlation,n`.
pub fn write_band_report_csv<W: Write>(out: W, reports: &[BandReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(BandRow {
            wave: r.wave,
            period_s: r.band.label(),
            mae: r.mae,
            mape_percent: r.mape,
            cosine: r.cosine,
            correlation: r.correlation,
            n: r.n,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub const ARTIFACT_MIN_PERIOD: f64 = 20.0;
pub const DEFAULT_ARTIFACT_WINDOW: (f64, f64) = (40.0, 110.0);
/// Extremum depths within this distance of the modal depth count as persistent, km.
pub const PERSISTENCE_TOLERANCE: f64 = 10.0;
/// Residual extrema below this fraction of the kernel peak are treated as noise.
pub const NO_ARTIFACT_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactScore {
    pub score: f64,
    pub no_artifact: bool,
    pub modal_depth: f64,
    pub periods: Vec<f64>,
    /// Depth (layer mid-point, km) of the largest |residual| inside the window, per period.
    pub extremum_depths: Vec<f64>,
    /// Largest |residual| inside the window divided by the reference kernel peak, per period.
    pub relative_magnitudes: Vec<f64>,
}

/// Most frequent value (exact equality); ties go to the earliest occurrence.
pub fn modal_value(values: &[f64]) -> Option<f64> {
    let mut best: Option<(usize, f64)> = None;
    for &v in values {
        let count = values.iter().filter(|&&u| u == v).count();
        if best.is_none_or(|(c, _)| count > c) {
            best = Some((count, v));
        }
    }
    best.map(|(_, v)| v)
}

/// Fraction of `depths` within `tolerance` of their modal value.
pub fn persistence_fraction(depths: &[f64], tolerance: f64) -> Option<(f64, f64)> {
    let mode = modal_value(depths)?;
    let hits = depths.iter().filter(|d| (*d - mode).abs() <= tolerance).count();
    Some((hits as f64 / depths.len() as f64, mode))
}

/// Persistence of the surrogate-minus-reference residual extremum across
/// periods of at least 20 s. Rows of both matrices correspond to `periods`.
pub fn prior_artifact_score(
    surrogate: &[Vec<f64>],
    reference: &[Vec<f64>],
    grid: &DepthGrid,
    periods: &[f64],
    depth_window: (f64, f64),
) -> Result<ArtifactScore> {
    if surrogate.len() != reference.len() || surrogate.len() != periods.len() {
        return Err(shape("kernel matrices and period list differ in length"));
    }
    if surrogate.iter().chain(reference).any(|r| r.len() != grid.len()) {
        return Err(shape("kernel rows do not match the depth grid"));
    }
    let mids = grid.layer_mid_depths();
    let in_window: Vec<usize> = (0..grid.len()).filter(|&i| mids[i] >= depth_window.0 && mids[i] <= depth_window.1).collect();
    if in_window.is_empty() {
        return Err(domain("depth window contains no layers"));
    }
    let mut used = Vec::new();
    let mut depths = Vec::new();
    let mut magnitudes = Vec::new();
    for ((s, r), &t) in surrogate.iter().zip(reference).zip(periods) {
        if t < ARTIFACT_MIN_PERIOD {
            continue;
        }
        let (best, mag) = in_window
            .iter()
            .map(|&i| (i, (s[i] - r[i]).abs()))
            .fold((in_window[0], f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        let peak = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        used.push(t);
        depths.push(mids[best]);
        magnitudes.push(if peak > 0.0 { mag / peak } else { f64::INFINITY });
    }
    if used.is_empty() {
        return Err(domain("no periods of at least 20 s selected"));
    }
    let no_artifact = magnitudes.iter().all(|m| *m < NO_ARTIFACT_FRACTION);
    let (fraction, modal_depth) = persistence_fraction(&depths, PERSISTENCE_TOLERANCE).expect("non-empty");
    Ok(ArtifactScore {
        score: if no_artifact { 0.0 } else { fraction },
        no_artifact,
        modal_depth,
        periods: used,
        extremum_depths: depths,
        relative_magnitudes: magnitudes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::earth_model::standard_depth_grid;
    use crate::error::Error;

    #[test]
    fn mae_cases() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((mae(&[3.01, 4.01], &[3.0, 4.0]).unwrap() - 0.01).abs() < 1e-12);
        assert!((mae(&[3.0, 3.1], &[3.1, 3.0]).unwrap() - 0.1).abs() < 1e-12);
        assert!(matches!(mae(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn mape_cases() {
        assert_eq!(mape(&[3.0], &[3.0]).unwrap(), 0.0);
        assert!((mape(&[3.03, 4.04], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-9);
        assert!(matches!(mape(&[1.0], &[0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn cosine_cases() {
        let a = [1.0, 2.0, -0.5];
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&a, &[-1.0, -2.0, 0.5]).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn pearson_cases() {
        let a = [1.0, 3.0, 2.0, 7.0];
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x + 3.0).collect();
        let c: Vec<f64> = a.iter().map(|x| 5.0 - x).collect();
        assert!((pearson(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&a, &c).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(pearson(&[2.0; 4], &a), Err(Error::Domain(_))));
    }

    #[test]
    fn band_edges() {
        let b = &STANDARD_BANDS;
        assert_eq!(band_index(b, 4.99).unwrap(), 0);
        assert_eq!(band_index(b, 5.0).unwrap(), 1);
        assert_eq!(band_index(b, 60.0).unwrap(), 5);
        assert_eq!(band_index(b, 2.0).unwrap(), 0);
        assert!(band_index(b, 60.5).is_err());
        assert!(band_index(b, 1.9).is_err());
    }

    #[test]
    fn band_report_counts_and_omits_empty_bands() {
        let k = (vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]);
        let records = vec![
            PeriodRecord { wave: Wave::Rayleigh, period: 3.0, dispersion: Some((3.03, 3.0)), kernels: Some(k.clone()) },
            PeriodRecord { wave: Wave::Rayleigh, period: 4.0, dispersion: Some((2.97, 3.0)), kernels: Some(k.clone()) },
            PeriodRecord { wave: Wave::Love, period: 60.0, dispersion: None, kernels: Some(k) },
        ];
        let rep = band_report(&records, &STANDARD_BANDS).unwrap();
        assert_eq!(rep.len(), 2);
        assert_eq!(rep.iter().map(|r| r.n).sum::<usize>(), 3);
        assert!((rep[0].mape - 1.0).abs() < 1e-9);
        assert!((rep[0].cosine - 1.0).abs() < 1e-12);
        assert!(rep[1].mae.is_nan());
        let mut buf = Vec::new();
        write_band_report_csv(&mut buf, &rep).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("wave,period_s,mae,mape_percent,cosine,correlation,n\n"));
        assert!(text.contains("rayleigh,2-5,"));
    }

    fn bump_rows(grid: &DepthGrid, center: f64, periods: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mids = grid.layer_mid_depths();
        let reference: Vec<Vec<f64>> = (0..periods)
            .map(|p| mids.iter().map(|z| (-(z - 20.0 - 4.0 * p as f64).powi(2) / 800.0).exp() * 0.01).collect())
            .collect();
        let surrogate = reference
            .iter()
            .map(|r| r.iter().zip(&mids).map(|(v, z)| v + 0.003 * (-(z - center).powi(2) / 50.0).exp()).collect())
            .collect();
        (surrogate, reference)
    }

    #[test]
    fn fixed_bump_scores_one() {
        let g = standard_depth_grid();
        let (s, r) = bump_rows(&g, 72.5, 10);
        let periods: Vec<f64> = (0..10).map(|i| 20.0 + 4.0 * i as f64).collect();
        let a = prior_artifact_score(&s, &r, &g, &periods, DEFAULT_ARTIFACT_WINDOW).unwrap();
        assert_eq!(a.score, 1.0);
        assert!(!a.no_artifact);
        assert_eq!(a.modal_depth, 72.5);
        let scaled = |m: &Vec<Vec<f64>>| m.iter().map(|r| r.iter().map(|v| v * 7.5).collect()).collect::<Vec<Vec<f64>>>();
        let b = prior_artifact_score(&scaled(&s), &scaled(&r), &g, &periods, DEFAULT_ARTIFACT_WINDOW).unwrap();
        assert_eq!(a, ArtifactScore { relative_magnitudes: a.relative_magnitudes.clone(), ..b.clone() });
    }

    #[test]
    fn zero_residual_sets_flag() {
        let g = standard_depth_grid();
        let (_, r) = bump_rows(&g, 70.0, 5);
        let periods = [20.0, 25.0, 30.0, 40.0, 50.0];
        let a = prior_artifact_score(&r, &r, &g, &periods, DEFAULT_ARTIFACT_WINDOW).unwrap();
        assert!(a.no_artifact);
        assert_eq!(a.score, 0.0);
    }

    #[test]
    fn short_periods_only_is_an_error() {
        let g = standard_depth_grid();
        let (s, r) = bump_rows(&g, 70.0, 2);
        assert!(matches!(prior_artifact_score(&s, &r, &g, &[5.0, 10.0], DEFAULT_ARTIFACT_WINDOW), Err(Error::Domain(_))));
    }

    #[test]
    fn modal_value_prefers_earliest_on_ties() {
        assert_eq!(modal_value(&[3.0, 1.0, 1.0, 3.0]), Some(3.0));
        assert_eq!(modal_value(&[3.0, 1.0, 1.0]), Some(1.0));
        assert_eq!(modal_value(&[]), None);
    }
}
