//! Experiment harness: configuration, dispatch, result records and reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod record;
pub mod run;

pub use config::{parse_config, parse_config_str, ExperimentConfig};
pub use error::CliError;
pub use record::{ResultRecord, SCHEMA_VERSION};
