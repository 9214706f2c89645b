//! Experiment harness for the `splitsde` library.
//!
//! The harness maps JSON experiment configurations onto the library's
//! engines, evaluates each experiment's declared criteria, and writes CSV
//! data files plus a machine-readable JSON summary. Every run is a pure
//! function of `(configuration, master seed)`: outputs are byte-identical
//! across repeats and across worker counts.

pub mod catalog;
pub mod config;
pub mod experiments;
pub mod io;

pub use config::{load_config, parse_config, CliError, LoadedConfig};
pub use experiments::{run_experiment, CriterionRow, RunOutcome, Summary};
