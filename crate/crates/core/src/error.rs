use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension n = {got} (supported: {supported})")]
    UnsupportedDimension { got: usize, supported: &'static str },

    #[error("unsupported resolution h = {0} (supported: 1/256 <= h <= 1/8)")]
    UnsupportedResolution(f64),

    #[error("field is not positive: {0}")]
    NotPositive(String),

    #[error("degenerate integral: {0}")]
    DegenerateIntegral(&'static str),

    #[error("field is not normalized: expected {expected}, found {actual}")]
    NotNormalized { expected: f64, actual: f64 },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("mass mismatch: source {source_mass}, target {target_mass}")]
    MassMismatch { source_mass: f64, target_mass: f64 },

    #[error("instance too large: {points} points (limit {limit})")]
    InstanceTooLarge { points: usize, limit: usize },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("incompatible Neumann data: residual {residual:e} above tolerance {tolerance:e}")]
    Incompatible { residual: f64, tolerance: f64 },

    #[error("point is not on the level set (w = {0:e})")]
    OffLocus(f64),

    #[error("degenerate gradient |grad w| = {0:e}")]
    DegenerateGradient(f64),

    #[error("degenerate surface metric (det = {0:e})")]
    DegenerateMetric(f64),

    #[error("vector field does not vanish on the boundary (max |V| = {0:e})")]
    NonVanishingBoundary(f64),

    #[error("surface is not minimal: sup |H| = {0:e}")]
    NotMinimal(f64),

    #[error("zero mass in row {0} of the transport plan")]
    ZeroRowMass(usize),

    #[error("unknown {kind}: {name}")]
    Unknown { kind: &'static str, name: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
