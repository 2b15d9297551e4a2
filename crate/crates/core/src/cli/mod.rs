//! Batch front end: experiment configs in, CSV series and a JSON verdict
//! report out.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 config error, 3 assumption
//! violated (without `--force`), 4 numerical failure.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{Experiment, ExperimentConfig};
pub use report::VerdictReport;
pub use runner::{check, run_experiment, stability_map, sweep, CliError, RunOptions};
