//! File formats, checkpoints, run directories and the command-line driver
//! around `byel_core`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 I/O or parse failure,
//! 3 missing input artifact, 4 non-finite loss, 5 other numerical failure.

pub mod checkpoint;
pub mod cli;
pub mod compare;
pub mod config;
pub mod error;
pub mod imageio;
pub mod manifest;
pub mod metrics;
pub mod pipeline;

pub use config::{Objective, Profile, RunConfig};
pub use error::{exit_code, Result, RunError};
