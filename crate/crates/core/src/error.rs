use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("degenerate plane: {0}")]
    DegeneratePlane(String),

    #[error("invalid road model: {0}")]
    InvalidModel(String),

    #[error("point maps to infinity")]
    PointAtInfinity,

    #[error("degenerate observations: {0}")]
    DegenerateObservations(String),

    #[error("fitted gain is zero (plane contains the baseline)")]
    PlaneThroughBaseline,

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("no fittable roll angle in [{min}, {max}]")]
    Unfittable { min: f64, max: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("warp is not monotone along rows: 1 + gain*sin(roll) = {0}")]
    NonMonotoneWarp(f64),

    #[error("degenerate scene: {0}")]
    DegenerateScene(String),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("dimension mismatch in {}: expected {expected:?}, found {found:?}", path.display())]
    DimensionMismatch {
        path: PathBuf,
        expected: (u32, u32),
        found: (u32, u32),
    },

    #[error("malformed image {}: {source}", path.display())]
    MalformedImage {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("unsupported image format in {}: {detail}", path.display())]
    UnsupportedFormat { path: PathBuf, detail: String },

    #[error("sample `{0}` already exists (use overwrite to replace it)")]
    DuplicateSample(String),

    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error at {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("empty evaluation region")]
    EmptyRegion,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
