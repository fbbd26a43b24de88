use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("region does not intersect any grid cell")]
    EmptyRegion,

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("field lives on a different grid")]
    GridMismatch,

    #[error("exponent out of range: {0}")]
    InvalidExponent(String),

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("subregion is not contained in the enclosing cube")]
    Containment,

    #[error("test function support is not inside the region")]
    SupportOutsideRegion,

    #[error("field is nonzero outside the region ({0} cells)")]
    UnsupportedOutsideRegion(usize),

    #[error("under-resolved data: {0}")]
    UnderResolved(String),

    #[error("residual gate failed for {label}: residual {residual:.3e} > tolerance {tolerance:.3e}")]
    ResidualGate { label: String, residual: f64, tolerance: f64 },

    #[error("trace gate failed: {0}")]
    TraceGate(String),

    #[error("inequality violation: lhs = {lhs:e} with rhs = 0")]
    Violation { lhs: f64 },

    #[error("admissible gamma interval is empty (k = {k}, eps0 = {eps0})")]
    EmptyGammaInterval { k: f64, eps0: f64 },

    #[error("point lies outside the region")]
    PointOutsideRegion,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
