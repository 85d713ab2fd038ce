//! Experiment runner for IIW tracking, PIB training and the oracle checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod oracles;
pub mod plot;
pub mod runs;

pub use error::{HarnessError, Result};
