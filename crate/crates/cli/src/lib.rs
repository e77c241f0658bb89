// SPDX-License-Identifier: MIT OR Apache-2.0

//! Config-driven experiments over the `kmm-core` estimators.
//!
//! A [`RunConfig`] names a method, a data source, and parameters. The
//! protocols in [`runner`] turn it into [`kmm_core::ExperimentResult`]
//! records, which [`output`] writes as CSV or JSON lines.

pub mod config;
pub mod error;
pub mod output;
pub mod runner;

pub use config::{DataSource, OutputFormat, RunConfig, ScalableSpec, SweepAxis, SweepSpec};
pub use error::{ConfigError, RunError};
