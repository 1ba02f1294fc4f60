//! Orchestration for the NETRA pipeline: configuration, cached stages and
//! run reports.

pub mod cache;
pub mod config;
pub mod error;
pub mod report;
pub mod stages;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use report::{build_report, render, Format, RunReport};
pub use stages::{plan, run_stages, StageOutcome, Status, STAGES};
