use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),
    #[error("tmcmc did not reach beta = 1 within {max_stages} stages (stopped at beta = {beta})")]
    MaxStagesExceeded {
        max_stages: usize,
        beta: f64,
        partial: Box<crate::tmcmc::TmcmcResult>,
    },
    #[error("tmcmc stage {stage}: all importance weights are zero")]
    DegenerateWeights { stage: usize },
    #[error("gmm fit failed: every candidate kernel count was discarded")]
    AllCandidatesDiscarded,
    #[error("optimizer did not converge after {iterations} iterations (gradient inf-norm {grad_norm:e})")]
    NotConverged { iterations: usize, grad_norm: f64 },
    #[error("unknown parameter name `{0}`")]
    UnknownParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
