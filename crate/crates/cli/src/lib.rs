//! Scenario runner and HTTP service over `discovery-core`.

pub mod commands;
pub mod error;
pub mod output;
pub mod scenario_file;
pub mod service;

pub use error::{CliError, CliResult};
pub use scenario_file::{parse_json, preset, ScenarioFile};
