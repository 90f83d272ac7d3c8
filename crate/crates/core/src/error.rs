use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("time {t} outside [0, 1]")]
    TimeOutOfRange { t: f64 },

    #[error("time {t} outside the open interval (0, 1)")]
    OpenTimeOutOfRange { t: f64 },

    #[error(
        "forward coefficient leaves the coth range entering interval {interval}: \
         a+ = {a_plus}, omega = {omega}"
    )]
    CothRange {
        interval: usize,
        a_plus: f64,
        omega: f64,
    },

    #[error("infeasible target variance: A = {a}, r0 = {r0}, rho = {rho}")]
    InfeasibleVariance { a: f64, r0: f64, rho: f64 },

    #[error("non-PD covariance: {0}")]
    NonPdCovariance(String),

    #[error("weights sum {0}")]
    WeightsSum(f64),

    #[error("invalid mixture: {0}")]
    Mixture(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("probe precision K_t = {k} is not positive at t = {t}")]
    NonPositiveProbe { t: f64, k: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("particle {particle} diverged at t = {t}")]
    Diverged { particle: usize, t: f64 },

    #[error("no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical pipeline, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::CothRange { .. }
                | Error::NonPositiveProbe { .. }
                | Error::NonFinite(_)
                | Error::Diverged { .. }
                | Error::NoSignChange { .. }
                | Error::InfeasibleVariance { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
