//! Command-line pipeline: prepares community graphs, trains source, KG and
//! transformation embeddings, and reports link-prediction metrics and timings.

pub mod config;
pub mod error;
pub mod layout;
pub mod manifest;
pub mod pipeline;

pub use config::{Overrides, PipelineConfig, SizeBucket};
pub use error::{CliError, Result};
pub use pipeline::Pipeline;
