//! Experiment plumbing: configuration, datasets, artifact formats and the
//! end-to-end pipeline.

pub mod config;
pub mod data;
pub mod io;
pub mod pipeline;

pub use config::{ExperimentConfig, SeedConvention};
pub use pipeline::{mean_std, ReportRow, Run, SweepRow};
