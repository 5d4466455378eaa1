//! File formats, provenance, parallel drivers and subcommands around
//! [`factmine_core`].

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod parallel;
pub mod provenance;

pub use config::PipelineConfig;
pub use error::{Error, Result};
