//! Log-linear Poisson regression of onset counts on age with a person-time offset.
//!
//! Model: `events_k ~ Poisson(py_k * exp(beta0 + beta1 * mid_k))`, fitted by
//! iteratively reweighted least squares. With the canonical log link the
//! observed and expected information coincide, so standard errors come from
//! the inverse of `X' W X` at the optimum.

use serde::Serialize;

use super::lexis::LexisCell;
use crate::error::{MrrError, Result};

pub const MAX_ITERATIONS: usize = 50;
pub const DEVIANCE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IncidenceFit {
    pub beta0: f64,
    pub beta1: f64,
    pub se0: f64,
    pub se1: f64,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
}

impl IncidenceFit {
    pub fn rate_at(&self, age: f64) -> f64 {
        (self.beta0 + self.beta1 * age).exp()
    }
}

struct Obs {
    x: f64,
    offset: f64,
    y: f64,
}

fn deviance(obs: &[Obs], b0: f64, b1: f64) -> f64 {
    obs.iter()
        .map(|o| {
            let mu = (b0 + b1 * o.x + o.offset).exp();
            let term = if o.y > 0.0 {
                o.y * (o.y / mu).ln()
            } else {
                0.0
            };
            2.0 * (term - (o.y - mu))
        })
        .sum()
}

/// `X' W X` and `X' W z` for the current iterate, with `W = mu` and working
/// response `z = eta - offset + (y - mu) / mu`.
fn normal_equations(obs: &[Obs], b0: f64, b1: f64) -> ([f64; 3], [f64; 2]) {
    let (mut s00, mut s01, mut s11, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for o in obs {
        let lin = b0 + b1 * o.x;
        let mu = (lin + o.offset).exp();
        let z = lin + (o.y - mu) / mu;
        s00 += mu;
        s01 += mu * o.x;
        s11 += mu * o.x * o.x;
        r0 += mu * z;
        r1 += mu * o.x * z;
    }
    ([s00, s01, s11], [r0, r1])
}

fn solve2(m: [f64; 3], r: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0] * m[2] - m[1] * m[1];
    if !(det.is_finite() && det.abs() > 0.0) {
        return None;
    }
    Some([
        (m[2] * r[0] - m[1] * r[1]) / det,
        (m[0] * r[1] - m[1] * r[0]) / det,
    ])
}

pub fn fit_poisson_loglinear(cells: &[LexisCell]) -> Result<IncidenceFit> {
    let obs: Vec<Obs> = cells
        .iter()
        .filter(|c| c.person_years > 0.0)
        .map(|c| Obs {
            x: c.midpoint(),
            offset: c.person_years.ln(),
            y: c.events as f64,
        })
        .collect();
    if obs.len() < 2 {
        return Err(MrrError::InsufficientData(format!(
            "need at least 2 cells with person-time, got {}",
            obs.len()
        )));
    }
    let total_events: f64 = obs.iter().map(|o| o.y).sum();
    if total_events < 1.0 {
        return Err(MrrError::InsufficientData("no events".into()));
    }
    if obs.iter().filter(|o| o.y > 0.0).count() == 1 {
        return Err(MrrError::Separation(
            "all events fall in a single cell".into(),
        ));
    }
    if cells.iter().any(|c| c.person_years <= 0.0 && c.events > 0) {
        return Err(MrrError::Separation(
            "events in a cell without person-time".into(),
        ));
    }

    // start from the constant-rate fit
    let total_py: f64 = obs.iter().map(|o| o.offset.exp()).sum();
    let mut b = [(total_events / total_py).ln(), 0.0];
    let mut dev = deviance(&obs, b[0], b[1]);

    for iteration in 1..=MAX_ITERATIONS {
        let (m, r) = normal_equations(&obs, b[0], b[1]);
        let mut next = solve2(m, r)
            .ok_or_else(|| MrrError::Separation("singular information matrix".into()))?;
        let mut next_dev = deviance(&obs, next[0], next[1]);
        // step halving guards against overshooting from poor starts
        let mut halvings = 0;
        while !(next_dev.is_finite() && next_dev <= dev * (1.0 + 1e-12) + 1e-12) && halvings < 30 {
            next = [0.5 * (next[0] + b[0]), 0.5 * (next[1] + b[1])];
            next_dev = deviance(&obs, next[0], next[1]);
            halvings += 1;
        }
        let change = (next_dev - dev).abs() / (next_dev.abs() + 0.1);
        b = next;
        dev = next_dev;
        if change < DEVIANCE_TOLERANCE {
            let (info, _) = normal_equations(&obs, b[0], b[1]);
            let det = info[0] * info[2] - info[1] * info[1];
            let se0 = (info[2] / det).sqrt();
            let se1 = (info[0] / det).sqrt();
            if !(b[0].is_finite() && b[1].is_finite() && se0 > 0.0 && se1 > 0.0) {
                return Err(MrrError::Separation("non-finite estimates".into()));
            }
            return Ok(IncidenceFit {
                beta0: b[0],
                beta1: b[1],
                se0,
                se1,
                converged: true,
                iterations: iteration,
                deviance: dev,
            });
        }
    }
    Err(MrrError::NonConvergence {
        iterations: MAX_ITERATIONS,
    })
}
