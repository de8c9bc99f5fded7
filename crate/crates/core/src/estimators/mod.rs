//! The estimation steps: incidence by Poisson regression on Lexis-expanded
//! person-time, prevalence by age band with a smoothing spline, and the
//! plug-in mortality rate ratio.

pub mod lexis;
pub mod mrr;
pub mod poisson;
pub mod prevalence;
pub mod spline;

pub use lexis::{lexis_expand, LexisCell};
pub use mrr::{
    assemble_table, mrr_plugin, mrr_plugin_at, run_algorithm1, EstimationSettings, KnownInputs,
    MrrRow, MrrTable, NonEstimable, Scenario, SurveyEstimates, DEFAULT_AGES,
};
pub use poisson::{fit_poisson_loglinear, IncidenceFit};
pub use prevalence::{estimate_prevalence, PrevalenceBand, PrevalenceCurve, SplineControl};
pub use spline::{Smoothing, SmoothingSpline};
