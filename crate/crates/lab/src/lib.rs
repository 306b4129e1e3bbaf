//! Experiment tooling around `dipa-core`: on-disk formats, configuration,
//! the grid runner, and report generation.

pub mod checkpoint;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod report;

pub use error::{Error, Result};
