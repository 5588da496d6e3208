use thiserror::Error;

/// Errors shared across the crate.
#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("non-finite value encountered in {context}")]
    Numeric { context: String },

    #[error("training diverged (NaN loss) at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("resource guard exceeded: {0}")]
    Resource(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("network carries no initialization snapshot (required by the magnitude-increase criterion)")]
    MissingSnapshot,

    #[error("activation record does not match network: {0}")]
    RecordMismatch(String),

    #[error("attack produced no successful adversaries")]
    EmptyAdvSplit,

    #[error("labels contain a single class; need both")]
    DegenerateLabels,

    #[error("solver failed to converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stale cache entry at {path}: {detail}")]
    StaleCache { path: String, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for validation problems, 3 for
    /// numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric { .. } | Error::Divergence { .. } | Error::Convergence { .. } => 3,
            _ => 2,
        }
    }
}
