//! Experiment drivers, configuration and reporting.

pub mod commands;
pub mod config;
pub mod convergence;
pub mod richardson;

pub use commands::{convergence_study, optimize_level, run_command, Command, LevelRun};
pub use config::{DataPreset, ExperimentConfig, InitialControl};
pub use convergence::{ConvergenceReport, ConvergenceRow, Reference};
pub use richardson::{fit_order, richardson_extrapolate, Extrapolation};
