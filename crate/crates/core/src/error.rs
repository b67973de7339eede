use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing header key: {0}")]
    MissingHeaderKey(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("mesh file not found: {}", .0.display())]
    MeshNotFound(PathBuf),

    #[error("{}: {message}", path.display())]
    File { path: PathBuf, message: String },

    #[error("diffraction geometry off the Keller cone by {0:.3e} rad")]
    KellerCone(f64),

    #[error("trace failed for tx {tx}, kind {kind}, perturbation {index}, cell {cell}: {source}")]
    Sweep {
        tx: usize,
        kind: String,
        index: usize,
        cell: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::File {
            path: path.into(),
            message: message.into(),
        }
    }
}
