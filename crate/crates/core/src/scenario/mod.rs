//! Scenario configuration, runs, result files and the built-in experiments.

mod analysis;
mod build;
mod config;
mod experiments;
mod output;

use std::path::PathBuf;

use thiserror::Error;

pub use analysis::{ecdf, ks_distance, linear_fit, mann_whitney, mean_ci95, MannWhitney, MeanCi, SlopeFit};
pub use build::{background_app_name, build, BACKGROUND_STREAM};
pub use config::{
    AppBehavior, AppConfig, BackgroundConfig, BackgroundMode, CellConfig, HostConfig, MecConfig,
    MobilityConfig, ScenarioConfig, ServiceConfig, ServiceTimeConfig, StatsConfig, UeAppConfig,
    UeConfig, ValidationError, ValidationKind, CONFIG_VERSION,
};
pub use experiments::{
    bundled, check_sequence, experiment_bg_validation, experiment_danger_zone, vehicle_timelines,
    BgValidationParams, BgValidationReport, CountResult, DangerZoneReport, SequenceViolation,
    VehicleTimeline, BUNDLED, DANGER_ZONE_STEPS, FOREGROUND_STREAM,
};
pub use output::{cdf_rows, run_sim, stream_file_stem, write_outputs, Manifest, ServiceManifest};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<ValidationError>),
    #[error("cannot build scenario: {0}")]
    Build(String),
    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Sequence(#[from] SequenceViolation),
}
