use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("invalid mechanism parameters: {0}")]
    InvalidParams(String),

    #[error("invalid regularization: {0}")]
    InvalidRegularization(String),

    #[error("invalid optimizer input: {0}")]
    InvalidOptimizer(String),

    #[error("linear system for the occupancy flow is singular")]
    Singular,

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("solver failed on profile {index} of stream {stream:#018x}: {source}")]
    Profile {
        stream: u64,
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("records are not comparable: {0}")]
    Incomparable(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn shape(what: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            what,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
