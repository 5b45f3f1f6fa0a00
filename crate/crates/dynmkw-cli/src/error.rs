// SPDX-License-Identifier: MIT OR Apache-2.0

//! CLI error type carrying the process exit code.

use std::fmt;

/// Errors surfaced to the shell. `Usage` exits with code 2 (bad flags
/// or flag combinations), `Runtime` with code 1 (I/O, parsing, or
/// solver failures on otherwise well-formed invocations).
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    /// Builds a `Usage` error from anything displayable.
    pub fn usage(msg: impl fmt::Display) -> Self {
        CliError::Usage(msg.to_string())
    }

    /// Builds a `Runtime` error from anything displayable.
    pub fn runtime(msg: impl fmt::Display) -> Self {
        CliError::Runtime(msg.to_string())
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Runtime(msg) => write!(f, "error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<dynmkw::Error> for CliError {
    fn from(e: dynmkw::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Convenience alias used across the binary.
pub type Result<T> = std::result::Result<T, CliError>;
