use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An operator failed the structural check implied by its declared kind.
    #[error("structural violation: {0}")]
    Structural(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// `Tr(χρ)` fell at or below the extinction floor.
    #[error("zero-probability branch: Tr(χρ) = {probability:e} <= floor {floor:e}")]
    ZeroProbabilityBranch { probability: f64, floor: f64 },

    #[error("probability has imaginary part {0:e}; inputs are not hermitian")]
    ImaginaryProbability(f64),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("model: {0}")]
    Model(String),
}

impl Error {
    pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, found })
        }
    }
}
