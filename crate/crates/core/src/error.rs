use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("transition row (s={state}, a={action}) sums to {sum}, expected 1")]
    NotStochastic { state: usize, action: usize, sum: f64 },

    #[error("negative transition probability {value} at (s={state}, a={action}, s'={next})")]
    NegativeProbability { state: usize, action: usize, next: usize, value: f64 },

    #[error("reward R[{state}][{action}] = {value} exceeds r_max = {r_max}")]
    RewardOutOfRange { state: usize, action: usize, value: f64, r_max: f64 },

    #[error("discount {0} must lie in (0, 1)")]
    DiscountRange(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("KL divergence is infinite at state {0}")]
    InfiniteKl(usize),

    #[error("iterate diverged at iteration {iteration}: |value| = {magnitude} exceeds ceiling {ceiling}")]
    Diverged { iteration: usize, magnitude: f64, ceiling: f64 },

    #[error("bounding function {0} violates the bounding conditions (set allow_invalid_bounding to run it anyway)")]
    InvalidBounding(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
