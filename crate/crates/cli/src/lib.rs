//! Configuration loading, experiment execution and CSV/JSON output for the
//! `kzlaser` command-line tool.

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

pub use config::{load_config, Experiment, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use experiment::run_experiment;
