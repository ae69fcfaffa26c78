use thiserror::Error;

/// Errors produced anywhere in the classification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed image or dictionary container.
    #[error("format error in {field}: {reason}")]
    Format { field: &'static str, reason: String },

    #[error("out of bounds: requested {requested}, available {available}")]
    Bounds {
        requested: String,
        available: String,
    },

    /// A block with no energy cannot be normalized.
    #[error("degenerate block at origin ({row}, {col}): all pixels are zero")]
    DegenerateBlock { row: usize, col: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A numerical precondition (e.g. unit-norm columns) was violated.
    #[error("numerical contract violated: {0}")]
    Contract(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn format(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            field,
            reason: reason.into(),
        }
    }

    /// Wraps the error with a short description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code for the CLI: 2 parameter/config, 3 data/format, 4 numerical contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter { .. } => 2,
            Error::Json(_) => 2,
            Error::Contract(_) => 4,
            Error::Context { source, .. } => source.exit_code(),
            Error::Format { .. }
            | Error::Bounds { .. }
            | Error::DegenerateBlock { .. }
            | Error::Shape(_)
            | Error::Io(_) => 3,
        }
    }
}
