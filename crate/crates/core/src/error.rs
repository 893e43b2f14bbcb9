// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

use crate::eigen::RefinementStep;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition (non-positive capacitance,
    /// flux bias off the sweet spot for a sweet-spot-only formula, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Grid or run configuration that cannot produce a trustworthy result.
    #[error("configuration error: {message}")]
    Config {
        message: String,
        suggested_lambda: Option<f64>,
    },

    #[error("operator is not symmetric (max |A - A^T| = {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("eigensolver did not converge after {restarts} restarts (best residuals {best_residuals:?})")]
    NoConvergence { restarts: usize, best_residuals: Vec<f64> },

    #[error("grid refinement cap reached without meeting the {target_ghz} GHz target")]
    RefinementCap {
        target_ghz: f64,
        trace: Vec<RefinementStep>,
    },

    #[error("ambiguous level classification: {message} (parities {parities:?})")]
    Classification { message: String, parities: Vec<(f64, f64)> },

    #[error("level {0} is missing from the level table")]
    MissingLabel(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("time step {dt_ns} ns exceeds the stability limit {max_dt_ns} ns")]
    StepTooCoarse { dt_ns: f64, max_dt_ns: f64 },

    #[error("density matrix invariant violated at t = {time_ns} ns: {message}")]
    InvariantViolation { time_ns: f64, message: String },

    #[error("model evaluation failed at flux {flux}: {source}")]
    AtFlux {
        flux: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by the caller's inputs rather than by a failed
    /// computation.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Domain(_)
            | Error::Config { .. }
            | Error::Parse { .. }
            | Error::StepTooCoarse { .. }
            | Error::Io(_)
            | Error::Csv(_) => true,
            Error::AtFlux { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}
