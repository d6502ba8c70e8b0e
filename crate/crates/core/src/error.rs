//! Crate-wide error type.
//!
//! Variants are grouped by how a caller should react: configuration and
//! argument errors are usage mistakes, `Numeric`/`Diverged` indicate the
//! computation itself went bad (non-finite state, exploding loss), and the
//! remaining variants wrap I/O-ish failures with context.

use std::fmt;

/// Any error produced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed or inconsistent run configuration (bad key, bad value,
    /// violated invariant between fields).
    #[error("config error: {0}")]
    Config(String),

    /// A function was called with arguments that violate its contract.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Simulation state stopped being finite or left plausible bounds.
    #[error("simulation diverged: {0}")]
    Diverged(String),

    /// A numeric routine failed (non-finite loss, no bracketing interval,
    /// singular update).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Noise-gain calibration could not reach its target.
    #[error("calibration failed: {0}")]
    Calibration(String),

    /// A weight container could not be read, written, or validated.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Result files required for reporting are missing or corrupt.
    #[error("report error: {0}")]
    Report(String),

    /// Underlying filesystem failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure in run artifacts.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Classifies the error for process exit purposes: `2` for usage and
    /// configuration problems, `3` for numeric/divergence aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidArgument(_)
            | Error::Checkpoint(_)
            | Error::Report(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::Diverged(_) | Error::Numeric(_) | Error::Calibration(_) => 3,
        }
    }
}

impl Error {
    /// Shorthand used at validation sites.
    pub fn config(msg: impl fmt::Display) -> Self {
        Error::Config(msg.to_string())
    }

    /// Shorthand used at argument-checking sites.
    pub fn invalid(msg: impl fmt::Display) -> Self {
        Error::InvalidArgument(msg.to_string())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
