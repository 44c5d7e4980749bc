use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field violates its invariant. Carries the field name.
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A tensor produced a NaN or infinity.
    #[error("non-finite value in tensor `{tensor}`")]
    NonFinite { tensor: &'static str },

    #[error("cannot sample from an empty {0}")]
    EmptyBuffer(&'static str),

    #[error("unknown variant `{0}`")]
    UnknownVariant(String),

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("generation {generation}: {source}")]
    Generation {
        generation: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// True when the error (or the error it wraps) came from a non-finite tensor.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite { .. } => true,
            Error::Generation { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::UnknownVariant(_) | Error::UnknownEnv(_))
    }
}

pub(crate) fn check_finite(tensor: &'static str, values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::NonFinite { tensor })
    }
}
