use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("matrix not positive definite: pivot {pivot:e} at index {index}")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("trellis too large: {states} states (limit {limit})")]
    TooManyStates { states: u128, limit: usize },
    #[error("degenerate design: {0}")]
    Degenerate(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("{path}:{line}: {msg}")]
    Config { path: PathBuf, line: usize, msg: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
