//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A scenario or allocation file failed to parse or validate.
    /// `line` is 1-based; 0 means the error is not tied to a single line.
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    /// Inconsistent inputs detected outside file parsing (bad parameters,
    /// allocation/station mismatch, headway gaps, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// The allocation problem has no feasible solution.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A shortest-path query between disconnected graph components.
    #[error("routing error: {0}")]
    Routing(String),
}

impl Error {
    pub fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 2 for input problems, 3 for
    /// infeasible allocation problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) => 3,
            _ => 2,
        }
    }
}
