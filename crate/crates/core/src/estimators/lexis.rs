//! Retrospective disease-free person-time by age band.
//!
//! A healthy participant aged `a` was at risk of onset over `[0, a)`; a
//! diseased one over `[0, a - d)`, with the onset event at `a - d`.

use crate::error::{MrrError, Result};
use crate::survey::Survey;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LexisCell {
    pub age_lo: f64,
    pub age_hi: f64,
    pub person_years: f64,
    pub events: u64,
}

impl LexisCell {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.age_lo + self.age_hi)
    }
}

pub fn lexis_expand(survey: &Survey, band_width: f64) -> Result<Vec<LexisCell>> {
    if !(band_width > 0.0 && band_width.is_finite()) {
        return Err(MrrError::InvalidArgument(format!(
            "band width must be positive, got {band_width}"
        )));
    }
    for (index, q) in survey.quadruples.iter().enumerate() {
        if q.d > q.a {
            return Err(MrrError::DurationExceedsAge {
                index,
                a: q.a,
                d: q.d,
            });
        }
        if !(q.a >= 0.0 && q.a.is_finite() && q.d >= 0.0) {
            return Err(MrrError::InvalidArgument(format!(
                "quadruple {index} is malformed: {q:?}"
            )));
        }
    }

    let band_of = |age: f64| (age / band_width).floor() as usize;
    let bands = survey
        .quadruples
        .iter()
        .map(|q| band_of(q.exposure_end()) + 1)
        .max()
        .unwrap_or(0);

    // exposures ending in band k cover every band below k completely
    let mut ending = vec![0u64; bands];
    let mut partial = vec![0.0; bands];
    let mut events = vec![0u64; bands];
    for q in &survey.quadruples {
        let end = q.exposure_end();
        let k = band_of(end);
        ending[k] += 1;
        partial[k] += end - k as f64 * band_width;
        if q.delta {
            events[k] += 1;
        }
    }

    let mut covering = vec![0u64; bands];
    for k in (0..bands.saturating_sub(1)).rev() {
        covering[k] = covering[k + 1] + ending[k + 1];
    }
    let cells = (0..bands)
        .map(|k| LexisCell {
            age_lo: k as f64 * band_width,
            age_hi: (k + 1) as f64 * band_width,
            person_years: covering[k] as f64 * band_width + partial[k],
            events: events[k],
        })
        .collect();
    Ok(cells)
}
