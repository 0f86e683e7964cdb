use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unknown case study `{0}`")]
    UnknownCaseStudy(String),

    #[error("soft constraint out of range: {0}")]
    SoftConstraint(String),

    #[error("oracle caps exceeded: {0}")]
    CapsExceeded(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("solver executable `{0}` not found")]
    SolverMissing(String),

    #[error("unparseable solver output: {reason}\n--- raw output ---\n{raw}")]
    SolverOutput { reason: String, raw: String },

    #[error("dataset generation failed on subset #{subset}: {source}")]
    Generation {
        subset: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("labels do not describe a valid solution: {0}")]
    InvalidLabels(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
