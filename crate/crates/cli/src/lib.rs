//! Config-driven experiment pipelines over `sharpap-core`.

pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod timing;

pub use config::{AttackerKind, DatasetSpec, ExperimentConfig};
pub use manifest::Manifest;
pub use pipeline::{run_experiment, run_stages, RunOutput, Stages};
pub use timing::{run_timing_comparison, TimingReport};
