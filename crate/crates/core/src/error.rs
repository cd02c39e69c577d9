use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate covariance: diagonal entry {index} is {value}, expected a strictly positive variance")]
    DegenerateCovariance { index: usize, value: f64 },

    #[error("invalid covariance: normalized correlation {value} at ({row}, {col}) lies outside [-1, 1]")]
    InvalidCovariance { row: usize, col: usize, value: f64 },

    #[error("degenerate precoder: row {row} is zero, antenna {row} would transmit pure quantizer noise")]
    DegeneratePrecoder { row: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid system dimensions: {0}")]
    InvalidDimensions(String),

    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),

    #[error("regularized Gram matrix is singular")]
    Singular,

    #[error(
        "gradient projection diverged at iteration {iteration}: non-finite MSE or gradient, retry with a smaller step"
    )]
    Diverged { iteration: usize },

    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),

    #[error("scheme `{0}` is reserved and not implemented")]
    UnimplementedScheme(String),
}
