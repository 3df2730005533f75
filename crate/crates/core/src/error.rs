use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by mesh handling, solvers and the shape pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("face {face} is invalid: {reason}")]
    InvalidFace { face: usize, reason: String },

    #[error("face {face} is degenerate (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },

    #[error("non-manifold mesh: {0}")]
    NonManifold(String),

    #[error("not disk topology, V-E+F={euler}")]
    NotDisk { euler: i64 },

    #[error("expected exactly one boundary loop, found {count}")]
    BoundaryLoops { count: usize },

    #[error("landmark index {index} out of range for mesh with {vertices} vertices")]
    LandmarkOutOfRange { index: usize, vertices: usize },

    #[error("duplicate landmark at vertex {vertex}")]
    DuplicateLandmark { vertex: usize },

    #[error("landmark set is empty")]
    EmptyLandmarks,

    #[error("landmark count mismatch {left}\u{2260}{right}")]
    LandmarkCountMismatch { left: usize, right: usize },

    #[error("landmark {landmark} (vertex {vertex}) must lie on the boundary")]
    LandmarkNotOnBoundary { landmark: usize, vertex: usize },

    #[error("corner selection produced coincident corners at vertex {vertex}")]
    CoincidentCorners { vertex: usize },

    #[error("corner roles differ between the two surfaces")]
    CornerOrderMismatch,

    #[error("linear system is singular or not positive definite (pivot {pivot} at row {row})")]
    Singular { row: usize, pivot: f64 },

    #[error("map collapses face {face}")]
    CollapsedFace { face: usize },

    #[error("Beltrami coefficient on face {face} has modulus {modulus} >= 1")]
    BeltramiOutOfRange { face: usize, modulus: f64 },

    #[error("composition denominator vanishes on face {face}")]
    CompositionDenominator { face: usize },

    #[error("embedding has {count} flipped faces")]
    FlippedFaces { count: usize },

    #[error("rectangle height {height} outside [1e-3, 1e3]")]
    BadAspect { height: f64 },

    #[error("point ({u}, {v}) lies outside the target domain")]
    PointLocation { u: f64, v: f64 },

    #[error("barycentric coordinates {bary:?} outside the face")]
    BadBarycentric { bary: [f64; 3] },

    #[error("folds persisted for {iterations} iterations")]
    PersistentFolds { iterations: usize },

    #[error("Teichmüller constant k={k} outside [0, 1)")]
    InvalidDilatation { k: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("class {label} has {count} subjects, need at least 2")]
    SmallClass { label: String, count: usize },

    #[error("expected exactly two classes, found {0}")]
    ClassCount(usize),

    #[error("no statistically significant vertices")]
    EmptyMask,

    #[error("too many subjects excluded: {excluded} of {total}")]
    TooManyExcluded { excluded: usize, total: usize },

    #[error("synthetic surface needs at least 200 vertices, got {0}")]
    ResolutionTooLow(usize),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
