//! Experiment runner for distributed deep JSCC over a two-user AWGN MAC:
//! configuration, dataset loaders, checkpoint and CSV formats, plots, and
//! the `train` / `eval` / `compare` / `params` / `region` stages.
//!
//! The numerical work lives in `jscc-core`; this crate adds everything that
//! touches the file system.

pub mod allocator;
pub mod artifacts;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
#[cfg(feature = "plots")]
pub mod plot;

pub use error::{RunError, RunResult};
