use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("boundary is not simple: min curvature {min_curvature:.4}, max curvature {max_curvature:.4}")]
    NonSimpleBoundary {
        min_curvature: f64,
        max_curvature: f64,
    },

    #[error("point ({x:.6}, {y:.6}) is not on the boundary (distance {distance:.3e})")]
    NotOnBoundary { x: f64, y: f64, distance: f64 },

    #[error("point {point:?} lies outside the chart")]
    OutsideChart { point: [f64; 3] },

    #[error("region does not intersect the domain")]
    EmptyRegion,

    #[error("trivial field: {0}")]
    TrivialField(String),

    #[error(
        "eigen iteration did not converge after {iterations} steps; residual history {history:?}"
    )]
    NoConvergence {
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("matrix is not positive definite at row {row}")]
    NotPositiveDefinite { row: usize },

    #[error("inadmissible geometry: {0}")]
    Inadmissible(String),

    #[error("smallness gate failed: side {side:.4e} exceeds {limit:.4e}; subdivide further")]
    GateFailed { side: f64, limit: f64 },

    #[error("lemma hypothesis not met: {0}")]
    NotApplicable(String),

    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> LabError {
    LabError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
