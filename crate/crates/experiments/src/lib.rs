//! Scenario files, example presets, and the drivers behind the `schloegl`
//! command-line tool.

pub mod config;
pub mod reports;
pub mod scenario;
pub mod sweep;
pub mod table;

pub use config::{ConfigError, ScenarioConfig};
pub use scenario::{run_scenario, RunArtifact, RunStatus};
