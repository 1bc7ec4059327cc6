//! Configuration, batch runner, reports and verification suites behind the
//! `explorecon` binary.

pub mod config;
pub mod problem;
pub mod report;
pub mod run;
pub mod verify;

pub use config::{Algorithm, Criterion, ExperimentConfig};
pub use report::RunReport;
