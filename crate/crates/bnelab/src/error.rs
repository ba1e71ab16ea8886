//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size must be a power of two >= 8, got {0}")]
    BadGridSize(usize),

    #[error("domain length must be positive and finite, got {0}")]
    BadDomainLength(f64),

    #[error("domain origin must be finite, got {0}")]
    BadDomainOrigin(f64),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("value length {got} does not match grid size {expected}")]
    BadFieldLength { expected: usize, got: usize },

    #[error("derivative order must be 1, 2 or 3, got {0}")]
    BadDerivativeOrder(u32),

    #[error("non-finite values encountered in {0}")]
    NonFinite(&'static str),

    #[error("evaluation point must be finite, got {0}")]
    NonFinitePoint(f64),

    #[error("{0}")]
    BadParameter(String),

    #[error(
        "grid does not resolve scale {scale}: transition width {width:.3e} needs dx <= {required_dx:.3e}, grid has dx = {actual_dx:.3e}"
    )]
    UnderResolved {
        scale: u32,
        width: f64,
        required_dx: f64,
        actual_dx: f64,
    },

    #[error("trajectory left the trusted interpolation window: q = {q:.6} outside [{lo:.6}, {hi:.6}]")]
    TrajectoryOutOfRange { q: f64, lo: f64, hi: f64 },

    #[error("half-line quadrature truncated: weight {weight:.3e} at the domain edge exceeds 1e-9")]
    QuadratureTruncated { weight: f64 },

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("time samples must increase strictly, got {prev} then {next}")]
    NonMonotoneTime { prev: f64, next: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("invariant `{name}` failed: {detail}")]
    InvariantFailure { name: String, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("file format error: {0}")]
    FileFormat(String),
}

impl Error {
    /// Process exit code for the CLI: config problems exit 2, failed
    /// invariants exit 3, everything else exits 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::InvariantFailure { .. } => 3,
            _ => 1,
        }
    }
}
