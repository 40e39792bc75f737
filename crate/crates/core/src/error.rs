use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid space configuration: {0}")]
    InvalidSpace(String),

    #[error("exact mode unavailable: S^d = {size} exceeds cap {cap}")]
    ExactModeUnavailable { size: String, cap: usize },

    #[error("invalid time {0}")]
    InvalidTime(f64),

    #[error("degenerate conditioning: q_t(x) = 0 at t = {t}, state index {state}")]
    DegenerateConditioning { t: f64, state: usize },

    #[error("states at Hamming distance {0} are not neighbours")]
    InvalidNeighbor(usize),

    #[error("invalid perturbation spec: {0}")]
    InvalidSpec(String),

    #[error("invalid rate: {0}")]
    InvalidRate(String),

    #[error("step too large: {0}")]
    StepTooLarge(String),

    #[error("negative probability mass {mass} for token {token}")]
    NegativeMass { token: usize, mass: f64 },

    #[error("Poisson truncation did not converge for mean {mean}")]
    TruncationOverflow { mean: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("score oracle routes disagree: direct {direct} vs posterior {posterior}")]
    OracleMismatch { direct: f64, posterior: f64 },

    #[error("step {k} from state {state:?} failed: {source}")]
    StepFailed {
        k: usize,
        state: Vec<usize>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap a sampler error with the step index and the offending state.
    pub fn at_step(self, k: usize, state: Vec<usize>) -> Self {
        match self {
            e @ Error::StepFailed { .. } => e,
            e => Error::StepFailed {
                k,
                state,
                source: Box::new(e),
            },
        }
    }
}
