//! Persistence, configuration, experiment harness and reports around
//! `rohil-core`.

pub mod config;
pub mod formats;
pub mod harness;
pub mod report;

pub use config::LabConfig;
pub use report::ReportRow;
