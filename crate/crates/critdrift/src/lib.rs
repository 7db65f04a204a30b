//! Configuration, spec-string parsing, experiment orchestration and report files
//! for `critdrift-core`.

pub mod config;
pub mod experiments;
pub mod report;
pub mod spec;
pub mod table;

pub use config::RunConfig;
pub use experiments::run;
pub use report::{ExperimentReport, Verdict};

/// Errors of the command-line layer.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot parse {what} `{input}`: {reason}")]
    Parse { what: &'static str, input: String, reason: String },
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("experiment `{experiment}` needs {what}")]
    Missing { experiment: String, what: &'static str },
    #[error(transparent)]
    Core(#[from] critdrift_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;
