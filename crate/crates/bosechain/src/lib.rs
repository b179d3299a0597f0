//! Configuration, orchestration, spectral analysis and output for the
//! boson-chain transport solvers in `bosechain-core`.

pub mod analysis;
pub mod config;
pub mod error;
pub mod output;
pub mod runner;

pub use bosechain_core as core;
pub use config::{emit, parse_config, parse_config_with_overrides, Config, ExperimentPlan, Method};
pub use error::AppError;
