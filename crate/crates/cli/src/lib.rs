//! File formats, run configuration and the simulate / reconstruct / evaluate
//! pipeline behind the `ptyfuse` command.

pub mod config;
pub mod container;
pub mod error;
pub mod image;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
