//! Monte Carlo experiment harness: configuration, drops and sweeps, result
//! files, and the command-line front end.

pub mod cli;
pub mod config;
pub mod output;
pub mod run;

pub use config::{db_to_linear, dbm_to_watts, linear_to_db, ExperimentConfig, Scheme, Sweep, SweepParam};
pub use output::{emit_results, read_results, OutputFormat};
pub use run::{aggregate, run_drop, run_drops, run_sweep, DropInstance, DropRecord, ResultRow, SchemeOutcome, SchemeRecord};
