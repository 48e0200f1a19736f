use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("time index out of range: t={t}, i={i}, horizon={horizon}")]
    IndexOutOfRange { t: usize, i: usize, horizon: usize },

    #[error("system is not strongly observable: C_tau H_tau is rank deficient at tau={tau}")]
    NotStronglyObservable { tau: usize },

    #[error("input matrix B_t is rank deficient at t={t}")]
    RankDeficientInput { t: usize },

    #[error("input not estimable at t={t}: C_(t+1) B_t is rank deficient")]
    InputNotEstimable { t: usize },

    #[error("output matrix is not full column rank; state cannot be recovered from outputs")]
    OutputNotInvertible,

    #[error("regressor matrix is rank deficient")]
    RankDeficientRegressor,

    #[error("simulation diverged at t={t}")]
    Diverged { t: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("plot rendering failed: {0}")]
    Plot(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Domain errors (observability and rank conditions) as opposed to
    /// malformed input or I/O failures.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::NotStronglyObservable { .. }
                | Error::RankDeficientInput { .. }
                | Error::InputNotEstimable { .. }
                | Error::OutputNotInvertible
                | Error::RankDeficientRegressor
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
