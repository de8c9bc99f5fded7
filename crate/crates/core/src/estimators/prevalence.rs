//! Prevalence by age band and its smoothed curve with derivative.

use serde::{Deserialize, Serialize};

use super::spline::{Smoothing, SmoothingSpline};
use crate::error::{MrrError, Result};
use crate::survey::Survey;

/// Bands with fewer participants are kept in the output but left out of the fit.
pub const DEFAULT_MIN_BAND_COUNT: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplineControl {
    /// Fixed smoothing parameter; generalized cross-validation when absent.
    pub lambda: Option<f64>,
    pub min_band_count: u64,
    /// Weight each band by its participant count.
    pub weighted: bool,
}

impl Default for SplineControl {
    fn default() -> Self {
        Self {
            lambda: None,
            min_band_count: DEFAULT_MIN_BAND_COUNT,
            weighted: true,
        }
    }
}

impl SplineControl {
    pub fn smoothing(&self) -> Smoothing {
        self.lambda.map_or(Smoothing::Gcv, Smoothing::Fixed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrevalenceBand {
    pub age_lo: f64,
    pub age_hi: f64,
    pub alive: u64,
    pub diseased: u64,
    pub low_information: bool,
}

impl PrevalenceBand {
    pub fn center(&self) -> f64 {
        0.5 * (self.age_lo + self.age_hi)
    }

    pub fn estimate(&self) -> f64 {
        self.diseased as f64 / self.alive as f64
    }
}

#[derive(Debug, Clone)]
pub struct PrevalenceCurve {
    pub band_width: f64,
    /// Non-empty bands in ascending age order.
    pub bands: Vec<PrevalenceBand>,
    pub spline: SmoothingSpline,
}

impl PrevalenceCurve {
    pub fn value_at(&self, age: f64) -> f64 {
        self.spline.value(age)
    }

    pub fn derivative_at(&self, age: f64) -> f64 {
        self.spline.derivative(age)
    }

    /// Centers of the first and last band used in the fit.
    pub fn fit_range(&self) -> (f64, f64) {
        self.spline.range()
    }
}

pub fn estimate_prevalence(
    survey: &Survey,
    band_width: f64,
    control: &SplineControl,
) -> Result<PrevalenceCurve> {
    if survey.quadruples.is_empty() {
        return Err(MrrError::EmptySurvey);
    }
    if !(band_width > 0.0 && band_width.is_finite()) {
        return Err(MrrError::InvalidArgument(format!(
            "band width must be positive, got {band_width}"
        )));
    }
    let band_of = |a: f64| (a / band_width).floor() as usize;
    let nbands = survey
        .quadruples
        .iter()
        .map(|q| band_of(q.a) + 1)
        .max()
        .unwrap_or(0);
    let mut alive = vec![0u64; nbands];
    let mut diseased = vec![0u64; nbands];
    for q in &survey.quadruples {
        let k = band_of(q.a);
        alive[k] += 1;
        diseased[k] += u64::from(q.delta);
    }

    let bands: Vec<PrevalenceBand> = (0..nbands)
        .filter(|&k| alive[k] > 0)
        .map(|k| PrevalenceBand {
            age_lo: k as f64 * band_width,
            age_hi: (k + 1) as f64 * band_width,
            alive: alive[k],
            diseased: diseased[k],
            low_information: alive[k] < control.min_band_count,
        })
        .collect();

    let used: Vec<&PrevalenceBand> = bands.iter().filter(|b| !b.low_information).collect();
    if used.is_empty() {
        return Err(MrrError::InsufficientData(format!(
            "no age band has at least {} participants",
            control.min_band_count
        )));
    }
    let x: Vec<f64> = used.iter().map(|b| b.center()).collect();
    let y: Vec<f64> = used.iter().map(|b| b.estimate()).collect();
    let w: Option<Vec<f64>> = control
        .weighted
        .then(|| used.iter().map(|b| b.alive as f64).collect());
    let spline = SmoothingSpline::fit(&x, &y, w.as_deref(), control.smoothing())?;
    Ok(PrevalenceCurve {
        band_width,
        bands,
        spline,
    })
}
