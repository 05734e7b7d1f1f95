use std::fmt;

use cimp_core::Pos;
use thiserror::Error;

/// A message tied to a file and, when known, a position in it.
#[derive(Debug)]
pub struct Diagnostic {
    pub file: String,
    pub pos: Option<Pos>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pos {
            Some(p) if p.is_known() => write!(f, "{}:{}:{}: error: {}", self.file, p.line, p.col, self.message),
            _ => write!(f, "{}: error: {}", self.file, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input or flags; exit code 1.
    #[error("{0}")]
    User(Diagnostic),
    /// A check ran and failed (divergence, counterexample, solver said sat).
    #[error("{0}")]
    Failed(String),
    /// Generated code misbehaved; exit code 2.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn at(file: &str, pos: Pos, message: impl Into<String>) -> Self {
        CliError::User(Diagnostic { file: file.to_string(), pos: Some(pos), message: message.into() })
    }

    pub fn user(file: &str, message: impl Into<String>) -> Self {
        CliError::User(Diagnostic { file: file.to_string(), pos: None, message: message.into() })
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::User(_) | CliError::Failed(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}
