//! Area-yield index insurance evaluation engine.
//!
//! The crate takes a panel of field-level crop yields grouped by county,
//! fits each field against its county average, simulates balanced yield
//! histories, prices area-based and farm-based contracts at ex-post fair
//! (or subsidized) premiums and compares them under CRRA expected utility
//! or cumulative prospect theory.
//!
//! Module map:
//! - [`data`]: panel types, delimited-text ingestion and a synthetic generator
//! - [`regression`]: field-to-county OLS, basis risk, critical beta, county variability
//! - [`simulate`]: detrending, truncated-normal field draws, AR(2) county extension
//! - [`contracts`]: indemnities, fair and subsidized premiums, net yields
//! - [`preferences`]: CRRA certainty equivalents and cumulative prospect theory
//! - [`evaluator`]: per-field comparison, farm-equivalent coverage, county aggregation
//! - [`pipeline`]: config-driven end-to-end runs with a content-hashed manifest

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod contracts;
pub mod data;
pub mod error;
pub mod evaluator;
pub mod pipeline;
pub mod preferences;
pub mod regression;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use contracts::{Scheme, SubsidySchedule, Trigger};
pub use data::{Crop, CountySeries, FieldCropSeries, Panel, Provenance, SyntheticConfig};
pub use error::{Error, Result};
pub use evaluator::{CountyAggregate, FarmEquivalent, FieldEvaluation};
pub use preferences::{Crra, CptParams, Preference};
pub use regression::{CountyStats, RegressionFit};

/// Minimum number of overlapping years required to fit a field.
pub const MIN_OBSERVATIONS: usize = 8;
