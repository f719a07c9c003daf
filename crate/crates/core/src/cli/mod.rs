//! Configuration-driven front end: solve, parameter sweeps and Monte Carlo
//! validation, writing CSV or JSON tables.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, ExperimentConfig, OutputFormat, Sweep, SweepVariable};
pub use output::{write_output, Cell, Table};
pub use run::{run_command, Command, CommandOutput};
