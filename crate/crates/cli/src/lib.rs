//! Command-line pipeline: synthetic data, preparation, training,
//! cross-validation and evaluation.

pub mod commands;
pub mod config;
pub mod dataset;
