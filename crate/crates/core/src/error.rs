use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: String, got: String },

    #[error("CFL number {cfl:.4} exceeds 1")]
    CflViolation { cfl: f64 },

    #[error("Picard iteration did not converge after {iterations} iterations (last relative update {update:.3e})")]
    PicardNotConverged { iterations: usize, update: f64 },

    #[error("linear solver ({context}) did not converge: {iterations} iterations, relative residual {residual:.3e}")]
    LinearSolver {
        context: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("test field is not solenoidal: max |div| = {max_div:.3e}")]
    NonSolenoidal { max_div: f64 },

    #[error("time {t} lies outside the recorded history [{start}, {end}]")]
    TimeOutOfRange { t: f64, start: f64, end: f64 },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("m = {m}: {source}")]
    Sweep {
        m: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed field data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
