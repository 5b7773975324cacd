use thiserror::Error;

/// Errors raised while building, analysing or solving a half-space moment system.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("flux matrix is not symmetric (asymmetry {0:e})")]
    AsymmetricFlux(f64),

    #[error("collision matrix is not positive semi-definite (min eigenvalue {0:e})")]
    IndefiniteCollision(f64),

    #[error("Null(A) and Null(Q) intersect (joint nullspace dimension {0})")]
    IncompatibleSystem(usize),

    #[error("half-range flux matrix is not positive definite (min eigenvalue {0:e})")]
    HalfFluxNotSpd(f64),

    #[error("index enumeration inconsistent: {0}")]
    InconsistentIndices(String),

    #[error(
        "decomposition invariant violated: {what} (residual {residual:e}, tolerance {tolerance:e})"
    )]
    DecompositionInvariant {
        what: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("reduced collision block is not positive definite")]
    CholeskyFailure,

    #[error("weight a = {a} violates a < 1/lambda_max = {limit}")]
    WeightViolation { a: f64, limit: f64 },

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("polynomial degree {0} exceeds the supported maximum")]
    DegreeOverflow(usize),

    #[error("boundary condition is not solvable: sigma_min(B T+) = {0:e}")]
    Unsolvable(f64),

    #[error("parity block structure is absent")]
    NoParity,

    #[error("split solve needs r2 = 0, got r2 = {0}")]
    NonzeroR2(usize),

    #[error("compatibility system is singular (pivot ratio {0:e})")]
    SingularCompatibility(f64),

    #[error("operation requires index bookkeeping that explicit systems do not carry")]
    MissingIndices,

    #[error("both data norms vanish but the solution does not")]
    ZeroDataNonzeroSolution,

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
