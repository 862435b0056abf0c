//! Configuration loading and pipeline orchestration for the `rsynth` tool.

pub mod config;
pub mod pipeline;

pub use config::{load_config, parse_config, ConfigError, ProblemConfig};
pub use pipeline::{run_pipeline, PipelineOutput, RunOptions, Stage};
