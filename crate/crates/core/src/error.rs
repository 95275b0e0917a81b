use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input")]
    EmptyInput,

    #[error("value {value} outside quantization range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("level index {index} exceeds level count {levels}")]
    IndexOutOfRange { index: usize, levels: usize },

    #[error("density integrates to {integral} over the range, expected {budget}")]
    Normalization { integral: f64, budget: f64 },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("corrupt payload: {0}")]
    Corrupt(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged at round {round}: loss {loss}")]
    Diverged { round: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
