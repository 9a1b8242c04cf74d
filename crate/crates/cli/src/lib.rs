//! Scenario-driven front end for `jacobi-index`: JSON configs in, JSON or CSV
//! reports out.

pub mod angle;
pub mod config;
pub mod report;
pub mod scenario;

pub use config::{ConfigFile, Scenario, ScenarioConfig};
pub use report::{exit, RunReport};
pub use scenario::{run_scenario, ScenarioResult};
