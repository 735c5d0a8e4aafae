use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid input `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("degenerate: {0}")]
    Degenerate(String),
    #[error("open set condition fails for the given open set")]
    OscFails,
    #[error("no child balls under node {node} (level {level}, word {word})")]
    ZeroChildren {
        node: usize,
        level: u32,
        word: String,
        candidates: usize,
        undecided: usize,
    },
    #[error("verification failed [{invariant}]: {detail}")]
    Verification { invariant: String, detail: String },
}

impl Error {
    pub fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub fn verification(invariant: &str, detail: impl Into<String>) -> Self {
        Error::Verification {
            invariant: invariant.to_string(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
