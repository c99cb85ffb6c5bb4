use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad volume header in {path}: {reason}")]
    Header { path: PathBuf, reason: String },
    #[error("payload size mismatch: header declares {expected} bytes, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("mask volume contains value {value} at index {index}; only 0 and 1 are allowed")]
    InvalidMask { index: usize, value: f32 },
    #[error("spacing must be positive, got {0:?}")]
    NonPositiveSpacing([f64; 3]),
    #[error("dimensions must be positive, got {0:?}")]
    InvalidDims([usize; 3]),
    #[error("image error in {path}: {reason}")]
    Image { path: PathBuf, reason: String },
    #[error("slice images have mixed dimensions: {first:?} vs {other:?} ({path})")]
    MixedImageDims {
        first: (u32, u32),
        other: (u32, u32),
        path: PathBuf,
    },
    #[error("no images found in {0}")]
    EmptyDirectory(PathBuf),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("duplicate case id `{0}`")]
    DuplicateCase(String),
    #[error("case `{0}` has no flair sequence")]
    MissingFlair(String),
    #[error("case `{case_id}`: {what} does not match flair geometry")]
    InconsistentGeometry { case_id: String, what: String },
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimMismatch([usize; 3], [usize; 3]),
    #[error("expected a {expected} volume")]
    WrongKind { expected: &'static str },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("case `{0}` has no tumor mask")]
    MissingTumorMask(String),
    #[error("slice is empty")]
    EmptySlice,
    #[error("boundary has {found} pixels, at least {required} required")]
    InsufficientBoundary { found: usize, required: usize },
    #[error("point set is coplanar or collinear")]
    DegenerateGeometry,
    #[error("mask is empty")]
    EmptyMask,
    #[error("{cases} cases cannot be split into {folds} folds of {fold_size}")]
    FoldDivisibility {
        cases: usize,
        folds: usize,
        fold_size: usize,
    },
    #[error("unknown label `{label}` for scheme {scheme}")]
    UnknownLabel { scheme: String, label: String },
    #[error("unknown subtype scheme `{0}`")]
    UnknownScheme(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("table has zero grand total")]
    EmptyTable,
    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("json error: {0}")]
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
