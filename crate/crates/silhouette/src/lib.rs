//! File formats, checkpoints, a thread-pool executor and the experiment
//! runner around `silhouette-core`.

pub mod checkpoint;
pub mod config;
pub mod exec;
pub mod io;
pub mod run;

pub use checkpoint::CheckpointError;
pub use config::{ConfigError, PipelineConfig};
pub use exec::Pool;
pub use io::DataError;
pub use run::{run_pipeline, RunError};
