use thiserror::Error;

/// Errors produced by the recruitment model library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside the domain of a function or distribution.
    #[error("domain error: {0}")]
    Domain(String),

    /// Trial data violate a structural invariant.
    #[error("invalid trial data: {0}")]
    InvalidData(String),

    /// No recruits (or no exposure) so the likelihood carries no information.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The likelihood keeps increasing as alpha and beta grow with fixed ratio.
    #[error("degenerate likelihood: profile still increasing at log(alpha) = {log_alpha}")]
    DegenerateLikelihood { log_alpha: f64 },

    /// The request is well formed but not supported by the model.
    #[error("unsupported request: {0}")]
    Unsupported(String),

    /// Too few samples for a density estimate, or a zero-spread sample.
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    /// A simulation configuration failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
