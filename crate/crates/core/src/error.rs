use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the simulation and estimation pipeline.
#[derive(Debug, Error)]
pub enum MrrError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("prevalence {0} outside [0, 1]")]
    PrevalenceOutOfRange(f64),

    #[error("age {age} outside the solved grid [0, {max_age}]")]
    AgeOutOfGrid { age: f64, max_age: f64 },

    #[error("no subject alive at survey time {0}")]
    NoneAlive(f64),

    #[error("quadruple {index} has duration {d} greater than age {a}")]
    DurationExceedsAge { index: usize, a: f64, d: f64 },

    #[error("empty survey")]
    EmptySurvey,

    #[error("poisson regression did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("poisson regression is separated: {0}")]
    Separation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<MrrError>,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl MrrError {
    pub fn context(self, context: impl Into<String>) -> Self {
        MrrError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MrrError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        MrrError::Csv {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, MrrError>;
