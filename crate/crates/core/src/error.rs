use thiserror::Error;

pub type Result<T, E = DpError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DpError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A value that must lie in the unit interval does not.
    #[error("`{field}` = {value} is outside [0, 1]")]
    Domain { field: &'static str, value: f64 },

    /// A record of an input dataset violates its declared bounds.
    #[error("record {index}: {reason}")]
    OutOfBounds { index: usize, reason: String },

    #[error("configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },
}

impl DpError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        DpError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        DpError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
