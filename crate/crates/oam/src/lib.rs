//! File formats, checkpoints and subcommands of the `oad-oam` tool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod detections;
pub mod error;
pub mod labels;
pub mod oadf;

pub use error::{CliError, Result};
