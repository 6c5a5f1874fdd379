use std::path::PathBuf;

use crate::contracts::{Scheme, Trigger};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("no rows")]
    NoRows,

    #[error("duplicate observation for field {field_id} ({crop}) in year {year}")]
    Duplicate {
        field_id: String,
        crop: String,
        year: i32,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate regressor: county series is constant over the overlap")]
    DegenerateRegressor,

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("detrending produced non-positive county mean {value} in year {year}")]
    DetrendFailure { year: i32, value: f64 },

    #[error("degenerate draw: location {location} outside [{lower}, {upper}] with zero scale")]
    DegenerateDraw { location: f64, lower: f64, upper: f64 },

    #[error("{scheme} coverage at {trigger} is not offered in the subsidy schedule")]
    NotOffered { scheme: Scheme, trigger: Trigger },

    #[error("non-positive net outcome {value} in year {year}")]
    NonPositiveOutcome { year: i32, value: f64 },

    #[error("no unflagged field in county {county_id} ({crop})")]
    EmptyCounty { county_id: String, crop: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// A field-crop pair (or a whole county) dropped by a pipeline stage.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Exclusion {
    pub county_id: String,
    /// Empty when the whole county was dropped.
    pub field_id: String,
    pub crop: crate::data::Crop,
    pub stage: &'static str,
    pub reason: String,
}
