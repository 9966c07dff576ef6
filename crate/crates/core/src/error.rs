use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("universe dimension {dim} exceeds the configured maximum {max}")]
    Size { dim: usize, max: usize },

    #[error("operator is not Hermitian (relative asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Invalid model definition; `field` names the offending entry.
    #[error("invalid model at `{field}`: {reason}")]
    Model { field: String, reason: String },

    #[error("parse error at `{path}`: {reason}")]
    Parse { path: String, reason: String },

    #[error("continuity lost at t = {time}: {reason}")]
    Continuity { time: f64, reason: String },

    #[error("stencil quality too low at t = {time}: asymmetry {asymmetry:.3e}")]
    StencilQuality { time: f64, asymmetry: f64 },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn model(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Model { field: field.into(), reason: reason.into() }
    }

    pub(crate) fn parse(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), reason: reason.into() }
    }

    /// Configuration-class errors, as opposed to failures during computation.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Model { .. } | Error::Parse { .. })
    }
}
