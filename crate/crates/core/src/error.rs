use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("EDF header field `{field}` is malformed: {detail}")]
    EdfHeader { field: String, detail: String },

    #[error("EDF channel `{channel}` has an unusable calibration: {detail}")]
    Calibration { channel: String, detail: String },

    #[error("EDF data truncated: expected {expected} bytes of samples, found {actual}")]
    TruncatedData { expected: usize, actual: usize },

    #[error("annotation line {line}: {detail}")]
    Annotation { line: usize, detail: String },

    #[error("missing channels: {}", .0.join(", "))]
    MissingChannels(Vec<String>),

    #[error("duplicate channel label after canonicalization: {0}")]
    DuplicateChannel(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate posterior spectrum: posterior alpha power is zero")]
    DegeneratePosterior,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("transport error after {attempts} attempt(s): {detail}")]
    Transport { attempts: usize, detail: String },

    #[error("malformed report structure: {detail}")]
    ReportStructure { detail: String, raw: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
