use thiserror::Error;

/// Errors raised by design construction and evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("formula error in row {row}: {message}")]
    Formula { row: usize, message: String },

    #[error("invalid design space: {0}")]
    Space(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("infeasible parameter: {0}")]
    InfeasibleParameter(String),

    #[error("degenerate category probabilities: {0}")]
    DegenerateProbability(String),

    #[error("singular information matrix: {0}")]
    Singular(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter sample error: {0}")]
    Sample(String),

    #[error("initial design: {0}")]
    InitialDesign(String),
}

impl Error {
    /// True for failures caused by the numbers rather than by the inputs' shape.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleParameter(_)
                | Error::DegenerateProbability(_)
                | Error::Singular(_)
                | Error::InitialDesign(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
