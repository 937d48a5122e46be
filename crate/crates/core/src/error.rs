use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed tree: {0}")]
    MalformedTree(String),

    #[error("probability mismatch at atom {atom}: expected {expected}, children sum to {actual}")]
    ProbabilityMismatch {
        atom: i64,
        expected: f64,
        actual: f64,
    },

    #[error("atom {atom} has non-positive probability {prob}")]
    NonPositiveProbability { atom: i64, prob: f64 },

    #[error("level {level} out of range for a depth-{depth} tree")]
    LevelOutOfRange { level: usize, depth: usize },

    #[error("function has {actual} values but the tree has {expected} atoms at that level")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite value {value} at position {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("value {value} at leaf {atom} is outside [0, 1]")]
    DomainViolation { atom: i64, value: f64 },

    #[error("atom walk infeasible at level {level}, parent atom {atom}: {reason}")]
    InfeasibleWalk {
        level: usize,
        atom: i64,
        reason: String,
    },

    #[error("function is not constant on level-{level} atom {atom}")]
    MeasurabilityViolation { level: usize, atom: i64 },

    #[error("weight {value} at leaf {atom} is not positive")]
    NonPositiveWeight { atom: i64, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed function file: {0}")]
    MalformedFunction(String),

    #[error("malformed certificate: {0}")]
    MalformedCertificate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors that signal a failed mathematical check rather than bad input.
    pub fn is_check_failure(&self) -> bool {
        matches!(self, Error::InfeasibleWalk { .. })
    }
}
