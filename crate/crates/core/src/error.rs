use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("input contract violated: {0}")]
    InputContract(String),

    /// Singular values fell inside the ambiguity band, so a rank or kernel
    /// dimension could not be decided.
    #[error("ill-conditioned {context}: singular value {value:.3e} inside ambiguity band [{band_lo:.1e}, {band_hi:.1e}]")]
    Conditioning {
        context: String,
        value: f64,
        band_lo: f64,
        band_hi: f64,
    },

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("time {t} outside integrated span [{lo}, {hi}]")]
    OutsideSpan { t: f64, lo: f64, hi: f64 },

    #[error("subspace rank jumps near t = {t} (expected {expected}, found {found})")]
    RankJump { t: f64, expected: usize, found: usize },

    #[error("degenerate subspace at t = {t}: {detail}")]
    DegenerateSubspace { t: f64, detail: String },

    #[error("consistency check `{check}` failed: residual {residual:.3e} > tolerance {tol:.1e}")]
    Consistency { check: String, residual: f64, tol: f64 },

    #[error("hypothesis not met: {0}")]
    HypothesisNotMet(String),

    #[error("model inconsistency: {0}")]
    ModelInconsistency(String),
}

/// Coarse classification used for exit codes and report triage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorClass {
    Hypothesis,
    Numerical,
    Input,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::HypothesisNotMet(_) => ErrorClass::Hypothesis,
            Error::InputContract(_) | Error::ModelInconsistency(_) => ErrorClass::Input,
            _ => ErrorClass::Numerical,
        }
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InputContract(msg.into())
    }
}
