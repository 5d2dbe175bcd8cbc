//! Experiment harness, file formats and command-line support for lap-to-lap
//! learning steering control. The models and learning laws live in
//! `lapilc-core`.

// `!(x > 0.0)` is kept on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod harness;
pub mod io;

pub use config::{ExperimentConfig, LearnerConfig, Plant, Tire, TrackSource};
pub use error::{Error, Result};
pub use harness::{
    compare_plants, export_result, gamma_sweep, run_acceleration_levels, run_experiment,
    ExperimentResult, ExportFormat, GammaCell, PlantComparison,
};
