//! Std side of the failure-detection testbed: artifact files, run
//! configuration, the benchmark harness, synthetic data and reports.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod report;
pub mod store;
pub mod synthetic;

pub use bench::{run_benchmark, BenchmarkResult};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use store::{read_artifact, write_artifact, StoreError};
