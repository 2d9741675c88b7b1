use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter failed validation (domain, range, ordering).
    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    /// A numerical routine failed to converge or produced inconsistent data.
    #[error("numeric failure in {context}: {message}")]
    Numeric { context: &'static str, message: String },

    /// Array or matrix dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Fewer eigenmodes are available than an operation requires.
    #[error("not enough eigenmodes: need {needed}, have {available}")]
    ModeShortfall { needed: usize, available: usize },

    /// The 1D distortion table has no entry for a requested size.
    #[error("no distortion available for quantizer size {0}")]
    MissingDistortion(usize),

    /// An operation that needs a product quantizer received another structure.
    #[error("operation requires a product-structured quantizer")]
    NonProductStructure,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Quantizer file could not be parsed or fails its internal checks.
    #[error("quantizer file format: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter { name, message: message.into() }
    }

    pub(crate) fn numeric(context: &'static str, message: impl Into<String>) -> Self {
        Error::Numeric { context, message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
