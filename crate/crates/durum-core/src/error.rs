//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: field `{field}`: {msg}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        field: String,
        msg: String,
    },

    #[error("{path}: {msg}")]
    BadFile { path: PathBuf, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("population: {0}")]
    Population(String),

    #[error("agronomy: {0}")]
    Agronomy(String),

    #[error("market: {0}")]
    Market(String),

    #[error("lca: {0}")]
    Lca(String),

    #[error("season {season}, farm {farm}: {msg}")]
    FarmArithmetic { season: usize, farm: u64, msg: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
