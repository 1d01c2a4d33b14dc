use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {stage} at t = {t}")]
    NonFinite {
        stage: &'static str,
        t: f64,
        z: Vec<f64>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty integration interval [{t0}, {t_end}]")]
    EmptyInterval { t0: f64, t_end: f64 },

    #[error("step size {h:e} makes no progress at t = {t}")]
    NoProgress { t: f64, h: f64 },

    #[error("step size {h:e} fell below h_min = {h_min:e} at t = {t}")]
    Stiffness { t: f64, h: f64, h_min: f64 },

    #[error("tolerance unreachable at t = {t}: {rejects} consecutive rejected trials")]
    ToleranceUnreachable { t: f64, rejects: usize },

    #[error("numerical failure after last good state at t = {t}: {source}")]
    NumericalFailure {
        t: f64,
        z: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("reconstruction diverged at step {step}")]
    ReconstructionDiverged { step: usize },

    #[error("finite-difference oracle refuses {dims} coordinates (limit {limit})")]
    TooManyCoordinates { dims: usize, limit: usize },

    #[error("malformed weights file: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
