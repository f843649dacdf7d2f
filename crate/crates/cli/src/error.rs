use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, flags or input data.
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<bsgp_core::Error> for CliError {
    fn from(e: bsgp_core::Error) -> Self {
        use bsgp_core::Error as E;
        use bsgp_hmc::{DensityError, SampleError};
        match e {
            E::Numerical(_) => CliError::Numerical(e.to_string()),
            E::Sampler(SampleError::Config(_)) | E::Sampler(SampleError::Density(DensityError::Validation(_))) => CliError::Input(e.to_string()),
            E::Sampler(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<bsgp_hmc::SampleError> for CliError {
    fn from(e: bsgp_hmc::SampleError) -> Self {
        bsgp_core::Error::from(e).into()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(format!("I/O error: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(format!("CSV error: {e}"))
    }
}
