//! Plug-in estimation of the mortality rate ratio.
//!
//! Solving the prevalence equation for `R = mu1 / mu0` given general
//! mortality `mu`:
//!
//! ```text
//! R = 1 + (lambda (1 - pi) - dpi) / (pi (1 - pi) (mu - lambda) + pi dpi)
//! ```
//!
//! where `dpi` is the combined time-plus-age derivative of prevalence. With
//! age-only rates the time derivative vanishes and `dpi = d pi / d a`.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::lexis::lexis_expand;
use super::poisson::{fit_poisson_loglinear, IncidenceFit};
use super::prevalence::{estimate_prevalence, PrevalenceCurve, SplineControl};
use crate::error::{MrrError, Result};
use crate::prevalence_oracle::PrevalenceOracle;
use crate::rate_model::RateSet;
use crate::survey::Survey;

/// Denominators smaller than this make the ratio non-estimable.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

pub const DEFAULT_AGES: [f64; 7] = [65.0, 70.0, 75.0, 80.0, 85.0, 90.0, 95.0];

/// Which inputs of the plug-in formula come from the survey.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Incidence from the survey; prevalence and its slope known.
    LambdaEstimated,
    /// Prevalence and its slope from the survey; incidence known.
    PiEstimated,
    BothEstimated,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::LambdaEstimated,
        Scenario::PiEstimated,
        Scenario::BothEstimated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::LambdaEstimated => "lambda_estimated",
            Scenario::PiEstimated => "pi_estimated",
            Scenario::BothEstimated => "both_estimated",
        }
    }

    pub fn estimates_incidence(self) -> bool {
        matches!(self, Scenario::LambdaEstimated | Scenario::BothEstimated)
    }

    pub fn estimates_prevalence(self) -> bool {
        matches!(self, Scenario::PiEstimated | Scenario::BothEstimated)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scenario {
    type Err = MrrError;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| MrrError::InvalidArgument(format!("unknown scenario {s:?}")))
    }
}

/// Why no ratio is reported at an age.
#[derive(Debug, Clone, PartialEq)]
pub enum NonEstimable {
    PrevalenceOutOfRange(f64),
    DegenerateDenominator(f64),
    NonFiniteInput,
}

impl fmt::Display for NonEstimable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NonEstimable::PrevalenceOutOfRange(p) => write!(f, "prevalence {p} outside (0, 1)"),
            NonEstimable::DegenerateDenominator(d) => write!(f, "degenerate denominator {d:e}"),
            NonEstimable::NonFiniteInput => f.write_str("non-finite input"),
        }
    }
}

/// Mortality rate ratio from incidence, prevalence, its derivative and general mortality.
pub fn mrr_plugin(
    lambda: f64,
    pi: f64,
    dpi: f64,
    mu: f64,
) -> std::result::Result<f64, NonEstimable> {
    if ![lambda, pi, dpi, mu].iter().all(|v| v.is_finite()) {
        return Err(NonEstimable::NonFiniteInput);
    }
    if !(pi > 0.0 && pi < 1.0) {
        return Err(NonEstimable::PrevalenceOutOfRange(pi));
    }
    let numerator = lambda * (1.0 - pi) - dpi;
    let denominator = pi * (1.0 - pi) * (mu - lambda) + pi * dpi;
    if denominator.abs() < DEGENERATE_DENOMINATOR {
        return Err(NonEstimable::DegenerateDenominator(denominator));
    }
    Ok(1.0 + numerator / denominator)
}

/// [`mrr_plugin`] with every input given as a function of age.
pub fn mrr_plugin_at(
    lambda_at: &dyn Fn(f64) -> f64,
    pi_at: &dyn Fn(f64) -> f64,
    dpi_at: &dyn Fn(f64) -> f64,
    mu_at: &dyn Fn(f64) -> f64,
    age: f64,
) -> std::result::Result<f64, NonEstimable> {
    mrr_plugin(lambda_at(age), pi_at(age), dpi_at(age), mu_at(age))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrrRow {
    pub age: f64,
    pub r_hat: std::result::Result<f64, NonEstimable>,
    pub r_true: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrrTable {
    pub scenario: Scenario,
    pub rows: Vec<MrrRow>,
}

impl MrrTable {
    pub fn estimate_at(&self, age: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.age == age)
            .and_then(|r| r.r_hat.as_ref().ok().copied())
    }
}

/// Shared tuning of the estimation steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationSettings {
    pub band_width: f64,
    pub spline: SplineControl,
}

impl Default for EstimationSettings {
    fn default() -> Self {
        Self {
            band_width: 1.0,
            spline: SplineControl::default(),
        }
    }
}

/// Survey-based estimates used by the scenarios.
#[derive(Debug, Clone)]
pub struct SurveyEstimates {
    pub incidence: Option<IncidenceFit>,
    pub prevalence: Option<PrevalenceCurve>,
}

impl SurveyEstimates {
    /// Fits what `scenarios` need from `survey`.
    pub fn from_survey(
        survey: &Survey,
        settings: &EstimationSettings,
        scenarios: &[Scenario],
    ) -> Result<Self> {
        let incidence = if scenarios.iter().any(|s| s.estimates_incidence()) {
            let cells = lexis_expand(survey, settings.band_width)?;
            Some(fit_poisson_loglinear(&cells).map_err(|e| e.context("incidence regression"))?)
        } else {
            None
        };
        let prevalence = if scenarios.iter().any(|s| s.estimates_prevalence()) {
            Some(
                estimate_prevalence(survey, settings.band_width, &settings.spline)
                    .map_err(|e| e.context("prevalence estimation"))?,
            )
        } else {
            None
        };
        Ok(Self {
            incidence,
            prevalence,
        })
    }
}

/// Known quantities available to the scenarios.
#[derive(Debug, Clone, Copy, Default)]
pub struct KnownInputs<'a> {
    pub oracle: Option<&'a PrevalenceOracle>,
    pub true_rates: Option<&'a RateSet>,
}

/// Step (iii): combines estimated and known inputs for one scenario.
pub fn assemble_table(
    scenario: Scenario,
    estimates: &SurveyEstimates,
    known: KnownInputs<'_>,
    mu_at: &dyn Fn(f64) -> f64,
    ages: &[f64],
) -> Result<MrrTable> {
    let lambda_at: Box<dyn Fn(f64) -> f64 + '_> = if scenario.estimates_incidence() {
        let fit = estimates.incidence.ok_or_else(|| {
            MrrError::InvalidArgument(format!("{scenario} needs an incidence fit"))
        })?;
        Box::new(move |a| fit.rate_at(a))
    } else {
        let rates = known.true_rates.ok_or_else(|| {
            MrrError::InvalidArgument(format!("{scenario} needs the true incidence"))
        })?;
        Box::new(move |a| rates.incidence_at(a))
    };

    type Curve<'c> = Box<dyn Fn(f64) -> f64 + 'c>;
    let (pi_at, dpi_at): (Curve<'_>, Curve<'_>) = if scenario.estimates_prevalence() {
        let curve = estimates.prevalence.as_ref().ok_or_else(|| {
            MrrError::InvalidArgument(format!("{scenario} needs a prevalence curve"))
        })?;
        (
            Box::new(|a| curve.value_at(a)),
            Box::new(|a| curve.derivative_at(a)),
        )
    } else {
        let oracle = known.oracle.ok_or_else(|| {
            MrrError::InvalidArgument(format!("{scenario} needs the true prevalence"))
        })?;
        (
            Box::new(|a| oracle.prevalence_at(a).unwrap_or(f64::NAN)),
            Box::new(|a| oracle.derivative_at(a).unwrap_or(f64::NAN)),
        )
    };

    let truth = known.true_rates.or(known.oracle.map(|o| o.rates()));
    let rows = ages
        .iter()
        .map(|&age| MrrRow {
            age,
            r_hat: mrr_plugin_at(&*lambda_at, &*pi_at, &*dpi_at, mu_at, age),
            r_true: truth.map(|r| r.true_mrr(age)),
        })
        .collect();
    Ok(MrrTable { scenario, rows })
}

/// Runs the three estimation steps for one scenario on one survey.
pub fn run_algorithm1(
    survey: &Survey,
    mu_at: &dyn Fn(f64) -> f64,
    scenario: Scenario,
    known: KnownInputs<'_>,
    ages: &[f64],
    settings: &EstimationSettings,
) -> Result<MrrTable> {
    let estimates = SurveyEstimates::from_survey(survey, settings, &[scenario])?;
    assemble_table(scenario, &estimates, known, mu_at, ages)
}
