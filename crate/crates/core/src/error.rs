use thiserror::Error;

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Failures raised by the geometric and numerical layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point {coords:?} lies outside the chart domain")]
    EvaluationOutsideDomain { coords: Vec<f64> },
    #[error("tangent vector is zero")]
    ZeroVector,
    #[error("derivative order {0} is not supported (max 4)")]
    UnsupportedOrder(usize),
    #[error("dimension {0} is not supported (2..=4)")]
    UnsupportedDimension(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid Randers data: {0}")]
    InvalidRanders(String),
    #[error("invalid metric data: {0}")]
    InvalidMetric(String),
    #[error("fundamental tensor is singular (condition number {condition:.3e})")]
    SingularTensor { condition: f64 },
    #[error("flag is degenerate (denominator {denominator:.3e})")]
    DegenerateFlag { denominator: f64 },
    #[error("geodesic extension failed: {0}")]
    GeodesicExtensionFailed(String),
    #[error("integration failed: {0}")]
    IntegrationFailure(String),
    #[error("path reached the chart margin at t = {time}")]
    DomainExit { time: f64 },
    #[error("Newton iteration diverged (residual {residual:.3e})")]
    NewtonDivergence { residual: f64 },
    #[error("stencil point left the domain: {0}")]
    StencilOutsideDomain(String),
    #[error("Riccati solution blew up at t = {time}")]
    BlowUp { time: f64 },
    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),
    #[error("span mismatch: {0}")]
    SpanMismatch(String),
    #[error("hypothesis violated: {what} (witness: {witness})")]
    HypothesisViolated { what: String, witness: String },
    #[error("degenerate immersion: smallest singular value {0:.3e}")]
    DegenerateImmersion(f64),
    #[error("invalid preset `{0}`")]
    InvalidPreset(String),
}
