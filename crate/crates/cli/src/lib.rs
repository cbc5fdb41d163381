//! Experiment runner for lottery image priors: configs, datasets, manifests
//! and reports around `lip-core`.

pub mod config;
pub mod dataset;
pub mod error;
pub mod manifest;
pub mod report;
pub mod run;

pub use config::{load_config, ExperimentConfig, ExperimentKind};
pub use dataset::{ingest_dataset, DatasetImage};
pub use error::{CliError, Result};
pub use lip_core::persist;
pub use manifest::RunManifest;
pub use report::emit_report;
pub use run::{load_ticket, run_experiment};
