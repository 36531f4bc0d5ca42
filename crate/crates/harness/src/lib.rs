//! Experiment grid driver: config parsing, cached per-cell pipeline runs and
//! result tables.

pub mod cache;
pub mod config;
pub mod grid;
pub mod pipeline;
pub mod report;

pub use config::{CellSpec, ExperimentConfig};
pub use grid::{read_results, run_grid, RunOptions};
pub use pipeline::{run_cell, RunContext, RunRecord};
pub use report::emit_results;
