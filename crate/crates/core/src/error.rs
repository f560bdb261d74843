use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid spectral grid: {0}")]
    InvalidGrid(String),

    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error("memory kernel tail |w({tau_max})| = {tail:e} exceeds tolerance {tol:e}")]
    KernelTail { tau_max: f64, tail: f64, tol: f64 },

    #[error("recurrence guard violated: horizon {horizon} > 0.5 * T_rec = {limit}")]
    RecurrenceGuard { horizon: f64, limit: f64 },

    #[error("integrator failure at t = {t}: {reason}")]
    IntegratorFailure { t: f64, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("scenario config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
