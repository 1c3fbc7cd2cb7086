//! Command-line driver for the `symplan` toolkit.
//!
//! One JSON document configures one command; see [`config::RunConfig`].

pub mod commands;
pub mod config;

pub use commands::{cmd_oracle, cmd_simulate, cmd_solve, cmd_sweep, Status};
pub use config::{load_config, parse_config, RunConfig};
