use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {constraint}")]
    InvalidParameter { field: String, constraint: String },

    #[error(
        "quadrature did not converge: doubling nodes changed the result by {change:.3e} (tolerance {tolerance:.3e})"
    )]
    NotConverged { change: f64, tolerance: f64 },

    #[error("no zero crossing inside the requested window")]
    NoCrossing,

    #[error("{count} zero crossings inside the requested window")]
    AmbiguousCrossing { count: usize },

    #[error("simulation needs {requested} samples but the budget is {budget}")]
    BudgetExceeded { requested: usize, budget: usize },

    #[error("loop sign is wrong: feedback would be positive")]
    WrongSign,

    #[error("discriminant slope is zero")]
    ZeroSlope,

    #[error("segment too short: {reason}")]
    SegmentTooShort { reason: String },

    #[error("insufficient samples: need {needed}, have {available}")]
    InsufficientSamples { needed: usize, available: usize },

    #[error("fit did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    FitNotConverged { iterations: usize, gradient_norm: f64 },

    #[error("degenerate Jacobian: normal matrix is singular")]
    DegenerateJacobian,

    #[error("configuration invalid:\n{}", .0.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            constraint: constraint.into(),
        }
    }

    /// Short machine-readable tag, used in the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::NotConverged { .. } => "not_converged",
            Error::NoCrossing => "no_crossing",
            Error::AmbiguousCrossing { .. } => "ambiguous_crossing",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::WrongSign => "wrong_sign",
            Error::ZeroSlope => "zero_slope",
            Error::SegmentTooShort { .. } => "segment_too_short",
            Error::InsufficientSamples { .. } => "insufficient_samples",
            Error::FitNotConverged { .. } => "fit_not_converged",
            Error::DegenerateJacobian => "degenerate_jacobian",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
        }
    }
}
