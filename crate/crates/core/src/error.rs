use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing or invalid; `key` is the dotted path.
    #[error("invalid configuration at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("video `{source_id}` has {length} frames but a clip needs {required}")]
    ClipTooShort {
        source_id: String,
        length: usize,
        required: usize,
    },

    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("shape mismatch at `{layer}`: {message}")]
    Shape { layer: String, message: String },

    #[error("config fingerprint mismatch: expected {expected}, found {found}")]
    Fingerprint { expected: String, found: String },

    #[error("corrupt {what}: {message}")]
    Corrupt { what: String, message: String },

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn shape(layer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Shape {
            layer: layer.into(),
            message: message.into(),
        }
    }

    pub fn corrupt(what: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Corrupt {
            what: what.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Process exit code for the command line: 2 config, 3 data, 4 divergence, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Argument(_) | Error::Fingerprint { .. } => 2,
            Error::Validation(_)
            | Error::ClipTooShort { .. }
            | Error::DatasetTooSmall(_)
            | Error::Dataset(_)
            | Error::Shape { .. } => 3,
            Error::Divergence { .. } => 4,
            Error::Io { .. } | Error::Corrupt { .. } | Error::Json(_) => 5,
        }
    }
}

/// Attaches a path to an `std::io::Result`.
pub(crate) trait IoContext<T> {
    fn at(self, path: impl AsRef<Path>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl AsRef<Path>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
