use thiserror::Error;

/// Errors raised anywhere in the simulation stack.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("channel singularity: user and antenna coincide at ({x}, {y}, {z})")]
    Singularity { x: f64, y: f64, z: f64 },

    #[error("antenna {index} of the codeword for ({x_f}, {y_f}) has no phase-aligned position inside the waveguide extent")]
    OutOfExtent { index: usize, x_f: f64, y_f: f64 },

    #[error("degenerate sampling range: {0}")]
    DegenerateRange(String),

    #[error("evaluation budget exceeded: {required} evaluations required, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

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

pub type Result<T> = std::result::Result<T, Error>;
