//! Batch front-end for `lpdecomp`: configuration, orchestration and output.

pub mod config;
pub mod output;
pub mod pipeline;
pub mod svg;

pub use config::RunConfig;
pub use pipeline::{execute, Command};
