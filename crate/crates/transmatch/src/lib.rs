//! Desk-scale lab around `transmatch-core`: dataset and checkpoint files,
//! parallel episodic benchmarks, reports and the `transmatch` command line.

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod lab;
pub mod records;
pub mod report;

pub use error::{AppError, Result};
