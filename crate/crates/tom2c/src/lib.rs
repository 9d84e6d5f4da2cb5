//! Operator side of the theory-of-mind multi-agent framework: configuration,
//! checkpoints, parallel training and evaluation, replays and SVG rendering.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod render;
pub mod replay;
pub mod run;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use error::{CliError, CliResult};
