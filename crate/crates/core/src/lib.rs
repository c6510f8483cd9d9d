//! Decentralized multi-block ADMM for demand-side primary frequency control.
//!
//! Loads adjust their consumption from local frequency measurements so that
//! the total change matches a generation shortfall at minimum aggregate
//! disutility.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod comm;
pub mod disutility;
pub mod error;
pub mod estimator;
pub mod grid;
pub mod harness;
pub mod oracle;

pub use error::{Error, Result};
