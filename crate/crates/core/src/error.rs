use alloc::string::String;

/// Errors raised by the analytic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("stratification error: {0}")]
    Stratification(String),
    #[error("imputation error: column `{0}` has no observed values")]
    Imputation(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("tuning error: {0}")]
    Tuning(String),
    #[error("model integrity error: {0}")]
    ModelIntegrity(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("bootstrap error: {0}")]
    Bootstrap(String),
    #[error("enumeration error: {0}")]
    Enumeration(String),
    #[error("schema error: {0}")]
    Schema(String),
}

pub type Result<T> = core::result::Result<T, Error>;
