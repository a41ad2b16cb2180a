use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("window {what} lies outside the available support")]
    OutOfSupport { what: String },

    #[error("scan pattern infeasible: {0}")]
    InfeasibleScan(String),

    #[error("scan position {index}: {source}")]
    AtPosition {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFiniteLoss { .. } => true,
            Error::AtPosition { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
