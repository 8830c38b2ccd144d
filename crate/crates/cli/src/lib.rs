//! Command-line front end: data generation, ensemble training, prediction,
//! control episodes, plotting and the acceptance run.

pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod eval;
pub mod output;
pub mod svg;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
