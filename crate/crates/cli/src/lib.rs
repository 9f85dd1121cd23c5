//! Command line harness for `dpplearn`: simulation, posterior fitting,
//! moment checks, leave-one-out classification and feature-weight learning.

pub mod commands;
pub mod config;
pub mod error;

pub use config::Config;
pub use error::{CliError, CliResult};
