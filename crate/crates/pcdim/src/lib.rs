//! File formats, command line and end-to-end pipeline around `pcdim-core`.
//!
//! - [`points`]: CSV and ASCII PLY point cloud readers,
//! - [`store_dir`]: the on-disk patch store (manifest plus binary blocks),
//! - [`model_file`]: the binary forest model format,
//! - [`tables`]: the CSV tables passed between subcommands,
//! - [`ops`] and [`pipeline`]: per-patch stages over a worker pool,
//! - [`cli`]: the `pcdim` executable.

pub mod cli;
pub mod error;
pub mod model_file;
pub mod ops;
pub mod parallel;
pub mod pipeline;
pub mod points;
pub mod store_dir;
pub mod tables;

pub use error::{Error, Result};
pub use parallel::Workers;
pub use pipeline::{run_pipeline, PipelineConfig, PipelineSummary};
