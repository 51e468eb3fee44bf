//! File formats, configuration, parallel drivers and plotting around
//! `pmp_stab_core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod parallel;
pub mod svg;

pub use config::{load_config, Problem, RunConfig};
pub use error::CliError;
