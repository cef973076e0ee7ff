use std::io;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("schema error in {file}: {field}")]
    Schema { file: PathBuf, field: String },
    #[error("data error in {file} at row {row}: {message}")]
    Data {
        file: PathBuf,
        row: usize,
        message: String,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Model(#[from] mmsurv_core::Error),
}

impl Error {
    pub(crate) fn schema(file: impl Into<PathBuf>, field: impl Into<String>) -> Self {
        Error::Schema {
            file: file.into(),
            field: field.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short category name, printed by the command line.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Schema { .. } => "schema",
            Error::Data { .. } => "data",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
            Error::Model(_) => "model",
        }
    }

    /// Process exit code for the category.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 2,
            Error::Schema { .. } => 3,
            Error::Data { .. } => 4,
            Error::Checkpoint(_) => 5,
            Error::Io { .. } => 6,
            Error::Model(_) => 7,
        }
    }
}
