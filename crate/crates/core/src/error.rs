use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error in {file}: missing column `{column}`")]
    Schema { file: String, column: String },

    #[error("validation error in {file}, row {row}: {message}")]
    Validation {
        file: String,
        row: u64,
        message: String,
    },

    #[error("referential error: {0}")]
    Reference(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("index {index} out of range 0..{len}")]
    Index { index: usize, len: usize },

    #[error("degenerate season for environment {env_id}: total GDU is zero")]
    DegenerateSeason { env_id: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("state error: {0}")]
    State(String),

    #[error("empty analysis: {0}")]
    EmptyAnalysis(String),

    #[error("degenerate clustering: {0}")]
    DegenerateClustering(String),

    #[error("ranking pairing error: hybrids missing from one ranking: {missing:?}")]
    Pairing { missing: Vec<String> },

    #[error("missing upstream artifact {path}: run `agrostress {producer}` first")]
    MissingArtifact { path: PathBuf, producer: String },

    #[error("bundle format error: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error in {file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::MissingArtifact { .. } | Error::Parameter(_) => 2,
            Error::Divergence { .. } => 4,
            _ => 3,
        }
    }
}
