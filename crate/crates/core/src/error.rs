use std::path::PathBuf;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: raster contains no valid cells")]
    AllNoData { path: PathBuf },
    #[error("{path}: raster must be two-dimensional with at least 2x2 cells, got {rows}x{cols}")]
    NotTwoDimensional {
        path: PathBuf,
        rows: usize,
        cols: usize,
    },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("patch of {patch_px} px does not fit a {rows}x{cols} grid")]
    PatchTooLarge {
        patch_px: usize,
        rows: usize,
        cols: usize,
    },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("need {requested} patches but only {available} are available")]
    InsufficientPatches { available: usize, requested: usize },
    #[error("image error for {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("json error for {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl CoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Self::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for errors caused by bad input (missing files, malformed data),
    /// as opposed to failures while writing results.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Self::Io { source, .. } if source.kind() != std::io::ErrorKind::NotFound)
    }
}
