// Copyright 2026 Thermalsim Contributors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("{what} did not converge (last refinement changed the result by {residual:.3e})")]
    NonConvergence { what: String, residual: f64 },

    #[error("numerical invariant violated: {0}")]
    Invariant(String),

    #[error("resonant denominator at levels ({a}, {b}), omega = {omega:.12}: |1 - D| = {magnitude:.3e}")]
    Resonance {
        a: usize,
        b: usize,
        omega: f64,
        magnitude: f64,
    },

    #[error("fixed point is not unique: {0}")]
    DegenerateFixedPoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 1,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 3,
            _ => 2,
        }
    }
}
