use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("matrix is not in the span of the algebra basis (residual {residual:.3e})")]
    ClosureViolation { residual: f64 },

    #[error("equivariance failure: {what} (residual {residual:.3e})")]
    EquivarianceFailure { what: String, residual: f64 },

    #[error("unknown group `{0}`")]
    UnknownGroup(String),

    #[error("unknown representation `{0}`")]
    UnknownRepresentation(String),

    #[error("contract violation: {what} (residual {residual:.3e}, tolerance {tolerance:.1e})")]
    ContractViolation {
        what: String,
        residual: f64,
        tolerance: f64,
    },

    #[error("orbit map is not injective at point {point:?} (smallest singular value {sigma_min:.3e})")]
    SingularPoint { point: Vec<f64>, sigma_min: f64 },

    #[error("trajectory left the domain of radius {radius} at t = {time}")]
    TrajectoryEscape { time: f64, radius: f64 },

    #[error("non-finite state after t = {last_time}")]
    BlowUp { last_time: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("degenerate point: {0}")]
    DegeneratePoint(String),

    #[error("no invariant metric: averaged form has invariance residual {residual:.3e}")]
    NoInvariantMetric { residual: f64 },

    #[error("point is too far from the slice base point (condition number {condition:.3e})")]
    SliceBoundary { condition: f64 },

    #[error("slices do not overlap at this point: {0}")]
    NoOverlap(String),

    #[error("finite-difference derivative is unreliable (Richardson disagreement {disagreement:.3e})")]
    UnreliableDerivative { disagreement: f64 },

    #[error("invalid splitting: {0}")]
    InvalidSplitting(String),

    #[error("point is not an equilibrium: |X(x)| = {norm:.3e}")]
    NotEquilibrium { norm: f64 },

    #[error("theorem violation: {what} (value {value:.3e})")]
    TheoremViolation { what: String, value: f64 },

    #[error("quadrature not exact for the requested degree: {required} nodes required, {configured} configured")]
    InsufficientQuadrature { required: usize, configured: usize },

    #[error("unsupported quadrature: {0}")]
    UnsupportedQuadrature(String),

    #[error("degree budget violated: source degree {source_degree} needs target degree at least {required}, got {target_degree}")]
    DegreeBudget {
        source_degree: usize,
        target_degree: usize,
        required: usize,
    },

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(context: &str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.to_string(),
            expected,
            found,
        }
    }
}
