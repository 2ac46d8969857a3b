//! Approximate Bayesian forecasting: ABC posteriors integrated into
//! one-step-ahead predictive distributions, with exact references and
//! scoring-rule and merging diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod abc;
pub mod density;
pub mod error;
pub mod evaluation;
pub mod exact;
pub mod filtering;
pub mod models;
pub mod params;
pub mod persist;
pub mod predictive;
pub mod rng;
pub mod stats;
pub mod summaries;

pub use error::{AbfError, Result};
