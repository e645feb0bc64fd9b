// Copyright 2026 Compulse Contributors
// SPDX-License-Identifier: Apache-2.0

//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by synthesis, simulation, calibration, and the runner.
///
/// Contract violations that indicate a programming error (negative
/// durations, out-of-range times handed to an envelope) panic instead; the
/// variants here are conditions a correct caller can hit and must handle.
#[derive(Debug, Error)]
pub enum Error {
    /// A config or constructor argument failed validation.
    #[error("invalid {field}: {reason}")]
    InvalidInput { field: String, reason: String },

    /// Clifford closure did not produce exactly the 24 expected elements.
    #[error("clifford closure produced {found} elements, expected 24")]
    CliffordClosure { found: usize },

    /// A rotation could not be matched to a Clifford table entry.
    #[error("rotation is not a Clifford element (best distance {distance:.3e})")]
    NotAClifford { distance: f64 },

    /// Synthesis exhausted its restart budget with the residual above
    /// tolerance. Carries the best attempt so callers can inspect it.
    #[error("synthesis stopped at residual {residual:.3e} after {attempts} restarts (tol {tol:.1e})")]
    SynthesisDidNotConverge {
        residual: f64,
        attempts: usize,
        tol: f64,
        best: Box<crate::synth::SynthesisResult>,
    },

    /// A gate pair outside the 25-pair addressed alphabet, or the excluded
    /// identity pair, was requested from the sequence library.
    #[error("gate pair {pair} is not served by the sequence library")]
    UnsupportedGatePair { pair: String },

    /// The density operator left the physical cone by more than tolerance.
    #[error("state is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPositive { min_eig: f64 },

    /// Trace plus tracked leakage drifted away from 1.
    #[error("trace + leaked = {total} drifted from 1 by {drift:.3e}")]
    TraceDrift { total: f64, drift: f64 },

    /// A decay fit could not be performed on the given survival data.
    #[error("decay fit failed: {reason}")]
    FitFailed { reason: String },

    /// A calibration or acceptance loop exhausted its budget.
    #[error("{what} exhausted its budget of {budget} without meeting {criterion}")]
    BudgetExhausted {
        what: String,
        budget: usize,
        criterion: String,
    },

    /// A drift-monitor probe landed outside the invertible response branch.
    #[error("probe population {population} is outside the invertible response branch")]
    OutsideResponseBranch { population: f64 },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {reason}")]
    Parse { what: String, reason: String },
}

impl Error {
    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
