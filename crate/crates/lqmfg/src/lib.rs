//! Configuration, output formats and experiment drivers on top of
//! [`lqmfg_core`], plus the `lqmfg` command line.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod io;

pub use config::RunConfig;
