//! End-to-end coalition experiments driven by a JSON run configuration.
//!
//! Stages run in order `simulate → graph → form → evaluate → resilience →
//! report`; each reads its inputs from the output directory, so any stage can
//! be rerun on its own.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use pipeline::{run_pipeline, run_stage, Stage};
