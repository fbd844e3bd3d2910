//! Batch driver for the tile-embedding pipeline: configuration, the stage
//! graph and artifact manifests. The `cte` binary is a thin wrapper.

pub mod config;
pub mod data;
pub mod error;
pub mod pipeline;
pub mod stages;

pub use config::{PipelineConfig, Variant};
pub use error::{CliError, CliResult};
pub use pipeline::{read_manifest, run_all, run_stage, Manifest, Stage};
