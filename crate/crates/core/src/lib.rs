//! Estimation of the mortality rate ratio of a chronic condition from
//! cross-sectional current-status-with-duration data, together with the
//! illness-death cohort simulator used to validate it.
//!
//! The pipeline: [`cohort`] simulates lives, [`survey`] draws `(t, a, delta, d)`
//! records, [`estimators`] turns them into incidence, prevalence and ratio
//! estimates, and [`experiment`] runs the whole replication grid.

pub mod cohort;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod mortality;
pub mod plot;
pub mod prevalence_oracle;
pub mod rate_model;
pub mod rng;
pub mod survey;

pub use cohort::{simulate_population, LifePath, Population, Window};
pub use error::{MrrError, Result};
pub use estimators::{
    estimate_prevalence, fit_poisson_loglinear, lexis_expand, mrr_plugin, run_algorithm1,
    EstimationSettings, IncidenceFit, KnownInputs, MrrTable, PrevalenceCurve, Scenario,
    SplineControl,
};
pub use experiment::{run_replication, ExperimentConfig, MuSource, RunReport};
pub use mortality::MortalityTable;
pub use plot::emit_plots;
pub use prevalence_oracle::{solve_prevalence, PrevalenceOracle};
pub use rate_model::{GompertzRate, RateSet, MAX_AGE};
pub use survey::{draw_survey, Quadruple, Survey};
