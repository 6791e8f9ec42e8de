use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, expected {expected}, found {found}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("bdfold: nonzero entry outside the diagonal blocks at ({row}, {col})")]
    NotBlockDiagonal { row: usize, col: usize },

    #[error("inverse transform left an imaginary residue of {residue:e} (relative), limit {limit:e}")]
    ImaginaryResidue { residue: f64, limit: f64 },

    #[error("SVD did not converge on Fourier slice {slice}")]
    SvdFailed { slice: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("non-finite iterate at iteration {iteration} ({what})")]
    Diverged { iteration: usize, what: &'static str },

    #[error("linear solve failed for view {view}")]
    LinearSolve { view: usize },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NotBlockDiagonal { .. } => "not_block_diagonal",
            Error::ImaginaryResidue { .. } => "imaginary_residue",
            Error::SvdFailed { .. } => "svd_failed",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonFinite(_) => "non_finite",
            Error::Diverged { .. } => "diverged",
            Error::LinearSolve { .. } => "linear_solve",
            Error::Parse { .. } => "parse",
            Error::Dataset(_) => "dataset",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
