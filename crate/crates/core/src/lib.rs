//! Stepwise construction of linear risk-adjustment formulas, scored on
//! global fit and on group net compensation.

// NaN must fail range checks, so several guards are written as `!(x > y)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod cli;
pub mod cohort;
pub mod design;
pub mod error;
pub mod metrics;
pub mod ols;
pub mod stepwise;
pub mod scenario;
pub mod service;
pub mod synthpop;

pub use error::{Error, Result};
