use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}{}: {msg}", line_suffix(.line))]
    Config {
        path: String,
        line: Option<usize>,
        msg: String,
    },

    #[error("malformed artifact {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("missing output of stage `{stage}`: {path}")]
    MissingStage { stage: String, path: PathBuf },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn line_suffix(line: &Option<usize>) -> String {
    line.map(|l| format!(": line {l}")).unwrap_or_default()
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Configuration problems map to exit code 2, numerical ones to 3.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Parameter(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
