use thiserror::Error;

use crate::fixpoint::PicardDiagnostics;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("measure has empty support")]
    EmptySupport,

    #[error("negative weight {weight} at atom {index}")]
    NegativeWeight { index: usize, weight: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("Hoelder exponent {0} is outside (0, 1]")]
    InvalidAlpha(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate diffusion: {0}")]
    DegenerateDiffusion(String),

    #[error("mass leak: {0}")]
    MassLeak(String),

    #[error("out of domain: {0}")]
    OutOfDomain(String),

    #[error("reversed times: t = {t} is not before s = {s}")]
    ReversedTimes { t: f64, s: f64 },

    #[error("no convergence after {iterations} Picard iterations (last distance {last_distance:e})")]
    MaxIterationsExceeded {
        iterations: usize,
        last_distance: f64,
        diagnostics: Box<PicardDiagnostics>,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown registry entry `{0}`")]
    UnknownRegistryName(String),

    #[error("config error: {0}")]
    ConfigParse(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
