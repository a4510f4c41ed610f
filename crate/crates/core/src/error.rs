use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid key parameters K={k}, P={p}: need K >= 1, P >= 2 and K < P")]
    InvalidTheta { k: u64, p: u64 },

    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("argument {value} outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },

    #[error("inconsistent deviation: p = {p} but (log n + gamma)/n = {implied} at n = {n}")]
    InconsistentDeviation { n: u64, p: f64, implied: f64 },

    #[error("infeasible schedule at n = {n}: {reason}")]
    Infeasible { n: u64, reason: String },

    #[error("exhaustive enumeration needs {work:e} configurations, above the limit of {limit:e}")]
    EnumerationTooLarge { work: f64, limit: f64 },

    #[error("{quantity} mismatch: exact {exact}, formula {formula}")]
    Mismatch {
        quantity: &'static str,
        exact: f64,
        formula: f64,
    },
}
