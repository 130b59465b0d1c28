//! File formats, configuration, a thread-pool executor and the command line
//! for `stablex-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod envfile;
pub mod exec;
pub mod output;
pub mod render;

pub use commands::RunError;
pub use config::{parse_config, RunConfig};
pub use envfile::{load_environment, save_environment, EnvFileError};
pub use exec::Parallel;
