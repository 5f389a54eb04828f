use thiserror::Error;

use crate::copula::CopulaFamily;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EdaError {
    #[error("parameter out of domain for {family:?} copula: {detail}")]
    ParameterDomain { family: CopulaFamily, detail: String },

    #[error("Kendall's tau {tau} cannot be represented by the {family:?} copula")]
    UnsupportedTau { family: CopulaFamily, tau: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("objective returned {value} at {point:?}")]
    Objective { point: Vec<f64>, value: f64 },

    #[error("run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<EdaError>,
    },

    #[error("internal numerical failure: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, EdaError>;
