use std::path::PathBuf;

use thiserror::Error;

use crate::problem::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point is not strictly feasible: constraint {index} has value {value}")]
    Infeasible { index: usize, value: f64 },

    #[error("log barrier undefined: constraint {index} has value {value} >= 0")]
    BarrierDomain { index: usize, value: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid problem: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidProblem(Vec<Diagnostic>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension {d} not supported: {reason}")]
    Dimension { d: usize, reason: String },

    #[error("unknown benchmark family `{0}`")]
    UnknownFamily(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
