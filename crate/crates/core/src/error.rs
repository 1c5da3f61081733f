use thiserror::Error;

/// Errors raised by the design, model and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("{routine} did not converge within {iterations} iterations")]
    NoConvergence {
        routine: &'static str,
        iterations: usize,
    },
    #[error("no failure region: {0}")]
    NoFailureRegion(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("invalid measurement schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("rank deficient data: {0}")]
    RankDeficient(String),
}

impl Error {
    /// True for failures of the numerics (non-convergence, singularity, overflow)
    /// as opposed to invalid inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Range(_)
                | Error::NoConvergence { .. }
                | Error::NoFailureRegion(_)
                | Error::Singular(_)
                | Error::RankDeficient(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
