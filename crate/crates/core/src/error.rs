use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {}", display_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("spectral radius did not converge after {iterations} iterations (gap {gap:e})")]
    IllConditioned { iterations: usize, gap: f64 },

    #[error("operation requires rho < 1 (rho = {rho})")]
    StabilityViolation { rho: f64 },

    #[error("hypothesis not satisfied: {0}")]
    HypothesisNotSatisfied(String),

    #[error("fixed point did not converge at theta = {theta} after {iterations} iterations (last change {residual:e})")]
    NonConvergence {
        theta: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("fluid policy produced more than {breakpoints} breakpoints")]
    PolicyLivelock { breakpoints: usize },

    #[error("singular linear system: {0}")]
    Singular(&'static str),

    #[error("numeric domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Errors caused by bad input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidModel(_) | Error::InvalidArgument(_))
    }
}

fn display_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
