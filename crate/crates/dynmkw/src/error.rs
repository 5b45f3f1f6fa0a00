// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every module of the crate.

use std::error::Error as StdError;
use std::fmt;

/// Errors produced by signal validation, factorization, and the solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument or data set violates a precondition.
    InvalidInput(String),
    /// A numerical routine could not complete (e.g. a covariance matrix
    /// that stays singular through the whole ridge schedule).
    Numerical(String),
}

impl Error {
    /// Builds an `InvalidInput` error from anything displayable.
    pub fn invalid_input(msg: impl fmt::Display) -> Self {
        Error::InvalidInput(msg.to_string())
    }

    /// Builds a `Numerical` error from anything displayable.
    pub fn numerical(msg: impl fmt::Display) -> Self {
        Error::Numerical(msg.to_string())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl StdError for Error {}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
