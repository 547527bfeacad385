//! Config-driven runner for grid-state qubit experiments.

pub mod config;
pub mod engine;
pub mod output;
pub mod runs;

pub use config::{ConfigError, Format, RunConfig};
pub use output::{emit_results, read_result_file, ResultSet, Table, Value};
pub use runs::{Command, Overrides, RunError};
