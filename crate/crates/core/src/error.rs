use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented precondition of the operation did not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A factorization or solve failed.
    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("dataset integrity: {0}")]
    Integrity(String),

    #[error("local QP infeasible: {0}")]
    Infeasible(String),

    #[error("enumeration budget exceeded: {paths} candidate paths (limit {limit})")]
    Budget { paths: u128, limit: u128 },

    #[error("connectivity lost at step {step}: {detail}")]
    ConnectivityLost { step: usize, detail: String },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn ensure_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} contains a non-finite value")))
    }
}
