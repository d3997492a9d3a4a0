//! Error type shared by every module.

use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum EclError {
    /// A precondition on an input was violated.
    #[error("validation error in {op}: {msg}")]
    Validation { op: &'static str, msg: String },
    /// A kernel was evaluated at coincident points.
    #[error("singular evaluation in {op}: source and target coincide")]
    Singular { op: &'static str },
    /// A linear solve, eigensolve or factorization failed.
    #[error("numerical error in {op}: {msg}")]
    Numerical { op: &'static str, msg: String },
    /// The cluster construction retained no cell.
    #[error("empty cluster: {msg}")]
    EmptyCluster { msg: String },
    /// Requested feature is not available for the given input.
    #[error("unsupported in {op}: {msg}")]
    Unsupported { op: &'static str, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl EclError {
    pub fn validation(op: &'static str, msg: impl Into<String>) -> Self {
        EclError::Validation { op, msg: msg.into() }
    }

    pub fn numerical(op: &'static str, msg: impl Into<String>) -> Self {
        EclError::Numerical { op, msg: msg.into() }
    }

    pub fn unsupported(op: &'static str, msg: impl Into<String>) -> Self {
        EclError::Unsupported { op, msg: msg.into() }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            EclError::Numerical { .. } | EclError::Singular { .. } => 3,
            EclError::Io(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, EclError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_class() {
        assert_eq!(EclError::validation("op", "x").exit_code(), 2);
        assert_eq!(EclError::unsupported("op", "x").exit_code(), 2);
        assert_eq!(EclError::numerical("op", "x").exit_code(), 3);
        assert_eq!(EclError::Singular { op: "op" }.exit_code(), 3);
        assert_eq!(EclError::Io(std::io::Error::other("x")).exit_code(), 1);
    }
}
