//! Configuration, reports and subcommands behind the `bellbet` binary.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{
    cmd_analyze, cmd_design, cmd_run, cmd_serve, cmd_station, cmd_validate, CommandError, DesignInput, DesignReport,
    RunArtifacts, ServeArtifacts, ValidationReport, EXIT_ABORT, EXIT_CONFIG, EXIT_OK, EXIT_OTHER, EXIT_VALIDATION,
};
pub use config::{AutoOr, ConfigError, ExperimentConfig};
pub use report::Report;
