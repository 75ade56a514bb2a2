//! Command layer for the `imitate` binary: scenario files in, CSV and JSON
//! artifacts out.

// `!(v > 0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod equilibria;
pub mod error;
pub mod output;
pub mod run;
pub mod scenario;
pub mod sweep;

pub use crate::error::{CliError, CliResult};
pub use crate::scenario::{Overrides, Scenario};
