//! CLI error type with process exit codes.
//!
//! Exit codes: 0 success, 1 config/validation error, 2 unsupported query,
//! 3 resource cap exceeded.

use relkm_core::oracle::OracleError;
use relkm_core::{AggregateError, LloydError, QueryError, SchemaError, SolverError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("load `{path}`: {message}")]
    Load { path: String, message: String },
    #[error("{step}: {source}")]
    Step {
        step: &'static str,
        source: Box<CliError>,
    },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Coreset(#[from] relkm_core::coreset::CoresetError),
    #[error(transparent)]
    Lloyd(#[from] LloydError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("io `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Attributes an error to a pipeline step.
    pub fn at_step<E: Into<CliError>>(step: &'static str) -> impl FnOnce(E) -> CliError {
        move |source| CliError::Step {
            step,
            source: Box::new(source.into()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Step { source, .. } => source.exit_code(),
            CliError::Query(QueryError::CyclicQuery { .. }) => 2,
            CliError::Oracle(OracleError::CapExceeded { .. }) => 3,
            _ => 1,
        }
    }
}
