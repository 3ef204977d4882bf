//! Scenario configuration, dispatch and artifact writing for the `qsmolu`
//! command-line tool.

pub mod config;
pub mod run;
pub mod sweep;

pub use config::{parse_config, ConfigError, Regime, ScenarioConfig, Violation};
pub use run::{run_scenario, Report, Status};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const NUMERIC: i32 = 2;
}
