//! Operator entry points for neurofarm: configuration, training runs,
//! evaluation, throughput benches and learning-curve plots.

pub mod bench;
pub mod config;
pub mod eval;
pub mod interrupt;
pub mod plot;
pub mod stats;
pub mod train;

pub use config::{ConfigError, RunConfig};
