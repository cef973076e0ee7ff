//! Files, reports and experiment orchestration around `mmsurv-core`.
//!
//! - [`config`]: TOML experiment configs and their canonical hash.
//! - [`dataset`]: dataset directories (manifest plus headed CSV files).
//! - [`checkpoint`]: bit-exact text checkpoints.
//! - [`harness`]: training, evaluation, ablation and grid runs.
//! - [`report`]: CSV, text and SVG outputs.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod report;

pub use error::{Error, Result};

/// Stamped into every output file.
pub const TOOL_VERSION: &str = concat!("mmsurv ", env!("CARGO_PKG_VERSION"));
