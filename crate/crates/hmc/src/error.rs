use thiserror::Error;

/// Failure raised by a target density evaluation.
#[derive(Debug, Clone, Error)]
pub enum DensityError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("chain {chain}: no finite log density after {attempts} initialisation attempts")]
    Initialization { chain: usize, attempts: usize },
    #[error("insufficient draws for diagnostics: {0}")]
    InsufficientDraws(String),
    #[error(transparent)]
    Density(#[from] DensityError),
}
