//! Experiment runner: configuration, end-to-end runs and plotting.

pub mod config;
pub mod plot;
pub mod runner;

pub use config::{ConfigError, RunConfig};
pub use runner::{run, RunError, RunReport};
