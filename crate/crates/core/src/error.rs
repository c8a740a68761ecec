use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("calibration infeasible: {0}")]
    Calibration(String),
    #[error("malformed victim: {0}")]
    MalformedVictim(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("budget exhausted after {0} attempts")]
    BudgetExhausted(u64),
    #[error("point is not on the curve")]
    OffCurve,
    #[error("value not invertible modulo the group order")]
    NotInvertible,
    #[error("lattice basis rows are linearly dependent")]
    DependentRows,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;
