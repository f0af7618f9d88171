//! Command-line front end for the multiscale elastic wave toolkit:
//! configuration parsing, run orchestration, and output writers.

pub mod config;
pub mod runner;
pub mod table;
pub mod vtk;

pub use config::{Config, Mode};
pub use runner::{run, RunSummary, OUTPUT_ROOT_ENV};
