//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by grid construction, model integration, assimilation and
/// the domain-decomposition driver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DdvarError {
    /// Invalid configuration value; `key` names the offending parameter.
    #[error("configuration error in `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// Array or index shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Time step violates the CFL bound.
    #[error("CFL violation at step {step}: courant number {courant:.6} exceeds limit {limit}")]
    StepSize {
        step: usize,
        courant: f64,
        limit: f64,
    },

    /// Non-finite values, loss of positive definiteness or a diverging iteration.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A subdomain did not receive the data it expects from its neighbours.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// File or serialization failure.
    #[error("i/o error: {0}")]
    Io(String),
}

impl DdvarError {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        DdvarError::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Prefix the message with the context it occurred in, keeping the variant.
    pub fn context(self, ctx: &str) -> Self {
        match self {
            DdvarError::Config { key, reason } => DdvarError::Config {
                key,
                reason: format!("{ctx}: {reason}"),
            },
            DdvarError::Dimension(m) => DdvarError::Dimension(format!("{ctx}: {m}")),
            DdvarError::Numerical(m) => DdvarError::Numerical(format!("{ctx}: {m}")),
            DdvarError::Protocol(m) => DdvarError::Protocol(format!("{ctx}: {m}")),
            DdvarError::Io(m) => DdvarError::Io(format!("{ctx}: {m}")),
            e @ DdvarError::StepSize { .. } => e,
        }
    }
}

impl From<std::io::Error> for DdvarError {
    fn from(e: std::io::Error) -> Self {
        DdvarError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for DdvarError {
    fn from(e: serde_json::Error) -> Self {
        DdvarError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, DdvarError>;
