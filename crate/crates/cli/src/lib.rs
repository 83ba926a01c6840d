//! IO, configuration, orchestration, synthetic data, and benchmarking
//! around the `relkm-core` clustering engine.

pub mod bench;
pub mod config;
pub mod error;
pub mod loader;
pub mod output;
pub mod pipeline;
pub mod synth;

pub use config::{ConfigFile, Overrides, RunConfig};
pub use error::CliError;
