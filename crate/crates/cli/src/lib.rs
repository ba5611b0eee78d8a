//! Experiment harness for the latent probit model: CSV ingestion, repeated
//! splits, cross-validation, synthetic and bound checks, and result emission.

pub mod app;
pub mod config;
pub mod cv;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod output;
pub mod split;
pub mod synth;

pub use config::{ExperimentConfig, Mode};
pub use error::{CliError, Result};
pub use experiment::{run_mtl, run_stl, run_transfer, Experiment, ResultRow, ResultTable};
