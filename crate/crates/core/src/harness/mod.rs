//! Config parsing, seeded multi-run experiments, median aggregation and CSV
//! output.

pub mod config;
pub mod csv;
pub mod experiment;

pub use config::{parse_config, ConfigError, ExperimentConfig};
pub use csv::{emit_csv, emit_median_csv, read_csv, HEADER};
pub use experiment::{aggregate_median, median_records, run_experiment, run_experiment_with_threads};
