use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Inputs that violate a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),
    /// Malformed or inconsistent observational data.
    #[error("data error: {0}")]
    Data(String),
    /// A numerical routine failed (non-finite values, factorisation breakdown).
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Sampler(#[from] bsgp_hmc::SampleError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}

impl From<Error> for bsgp_hmc::DensityError {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(m) => bsgp_hmc::DensityError::Numerical(m),
            other => bsgp_hmc::DensityError::Validation(other.to_string()),
        }
    }
}
