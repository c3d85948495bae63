use thiserror::Error;

#[derive(Debug, Error)]
pub enum SorsError {
    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("all stored trajectories have tied sparse returns")]
    NoRankablePairs,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("enumeration would produce {required} trajectories, cap is {cap}")]
    Capacity { required: u128, cap: u128 },

    #[error("value iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error{}: {message}", config_location(*line, key))]
    Config {
        line: usize,
        key: String,
        message: String,
    },

    /// Order-equivalent rewards produced different optimal-policy sets.
    #[error("order-equivalent rewards induced different optimal policies: {0}")]
    TheoremViolation(String),

    #[error("seed {seed}: {source}")]
    SeedFailed { seed: u64, source: Box<SorsError> },

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SorsError> = std::result::Result<T, E>;

fn config_location(line: usize, key: &str) -> String {
    match (line, key.is_empty()) {
        (0, true) => String::new(),
        (0, false) => format!(", key `{key}`"),
        (_, true) => format!(" at line {line}"),
        (_, false) => format!(" at line {line}, key `{key}`"),
    }
}

pub(crate) fn contract(msg: impl Into<String>) -> SorsError {
    SorsError::Contract(msg.into())
}
