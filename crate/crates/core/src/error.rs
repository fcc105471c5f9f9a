//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the ingestion, estimation, and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("duplicate record for ({timestamp}, {location}) at {path}:{line}")]
    DuplicateRecord {
        timestamp: String,
        location: String,
        path: String,
        line: usize,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("degenerate pollutant {name}: q85 ({q85}) must exceed minimum ({min})")]
    DegeneratePollutant { name: String, min: f64, q85: f64 },

    #[error("no rows survived filtering")]
    EmptyFilter,

    #[error("pollutant {0} has no scaling parameters")]
    MissingScaling(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("NNLS did not converge for row {row} within {iterations} iterations")]
    NnlsNonConvergence { row: usize, iterations: usize },

    #[error("no source contributes to pollutant {0}")]
    ZeroAttribution(String),

    #[error("rank-deficient design matrix: column {0}")]
    RankDeficient(String),

    #[error("analysis error: {0}")]
    Analysis(String),
}

pub type Result<T> = std::result::Result<T, Error>;
