use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("degenerate simplex: {0}")]
    DegenerateSimplex(String),
    #[error("duplicate simplex {0:?}")]
    DuplicateSimplex(Vec<usize>),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degree mismatch: expected {expected}, got {got}")]
    DegreeMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("objects belong to different complexes ({0} vs {1})")]
    ComplexMismatch(String, String),
    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },
    #[error("invalid truncation: m = {m}, N = {n}")]
    InvalidTruncation { m: usize, n: usize },
    #[error("linear solver failed: {0}")]
    SolverFailure(String),
    #[error("kernel bandwidth {eps} too large for box extent {extent}")]
    BandwidthTooLarge { eps: f64, extent: f64 },
    #[error("non-finite gradient in tensor {0}")]
    NonFiniteGradient(String),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("CFL condition violated: v_max*dt/h_min = {0}")]
    CflViolation(f64),
    #[error("complex is not connected ({0} components)")]
    NonConnected(usize),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("target has zero norm")]
    ZeroNormTarget,
    #[error("betti numbers {found:?} differ from expected {expected:?}")]
    BettiMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
