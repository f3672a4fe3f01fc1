//! Monte Carlo verification harness for the sigtrace toolkit.
//!
//! * [`config`]: experiment configuration with JSON files and command-line overrides.
//! * [`stats`]: Wilson and normal intervals, quantiles and a bootstrap check.
//! * [`report`]: reports with bound checks, schema validation and JSON/CSV output.
//! * [`experiments`]: the registry of verifications run by `sigtrace verify <id>`.
//! * [`cli`]: command implementations behind the `sigtrace` binary.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod report;
pub mod stats;

pub use config::ExperimentConfig;
pub use experiments::{Experiment, ExperimentError, ExperimentRegistry};
pub use report::{Report, Status};
