use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("projection is ill-posed at {0:?}")]
    ProjectionIllPosed(Vec<f64>),
    #[error("point is off the manifold by {distance:e}")]
    PointOffManifold { distance: f64 },
    #[error("cutoff radii must satisfy 0 < inner < outer (got inner={inner}, outer={outer})")]
    BadRadii { inner: f64, outer: f64 },
    #[error("face {0} is degenerate")]
    DegenerateFace(usize),
    #[error("quadratic fit is rank deficient at vertex {0}")]
    StencilRankDeficient(usize),
    #[error("wrong topology: expected {expected}, found genus {genus} with {boundaries} boundary loops")]
    WrongTopology { expected: &'static str, genus: usize, boundaries: usize },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("test-field dictionary is empty")]
    EmptyDictionary,
    #[error("test field {index} is not tangent to the constraint (normal component {deviation:e})")]
    FieldNotTangent { index: usize, deviation: f64 },
    #[error("mesh has no boundary")]
    NoBoundary,
    #[error("slice {slice} of the sweepout degenerated: {reason}")]
    NonCompactFamily { slice: usize, reason: String },
    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
    #[error("invalid configuration: {}", .0.join("; "))]
    ConfigInvalid(Vec<String>),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
