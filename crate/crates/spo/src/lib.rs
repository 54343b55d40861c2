//! Files and plumbing around `spo-core`: JSON-lines datasets, vocabulary and
//! dataset metadata, JSON checkpoints, metrics CSVs, TOML run configs, and
//! the per-run series used for plotting.

pub mod checkpoint;
pub mod config;
pub mod dataset;
mod error;
pub mod metrics;
pub mod report;
pub mod run;

pub use error::{Error, Result};
