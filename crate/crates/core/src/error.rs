use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("matrix is singular (min eigenvalue {min_eigenvalue:e})")]
    Singular { min_eigenvalue: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("not converged after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("line search made no progress")]
    LineSearch,

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
