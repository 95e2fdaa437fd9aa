//! Command-line driver, configuration and file formats for the lattice
//! simulation engine in `lsw-core`.
//!
//! [`verbs::run`] is the entry point used by the `lsw` binary: it resolves a
//! [`config::RunConfig`], runs one verb on a thread pool and writes CSV
//! tables plus a `manifest.json` into the output directory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod executor;
pub mod output;
pub mod validate;
pub mod verbs;

pub use config::RunConfig;
pub use error::{Result, SimError};
pub use verbs::{run, Outcome, RunOptions, Verb};
