use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval [{lo}, {hi}]: bounds must be finite with lo < hi")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("invalid parameter `{key}`: {message}")]
    InvalidParameter { key: String, message: String },

    #[error(
        "quadrature did not converge: error estimate {estimate:e} exceeds tolerance {tolerance:e} \
         after reaching refinement depth {depth}"
    )]
    NonConvergence {
        estimate: f64,
        tolerance: f64,
        depth: usize,
    },

    #[error("integrand is not finite at t = {at}")]
    NonFiniteIntegrand { at: f64 },

    #[error("density has no positive mass on the interval (mass = {mass:e})")]
    ZeroMass { mass: f64 },

    #[error("density has zero second moment about its center")]
    ZeroVariance,

    #[error("x = {x} lies outside [{lo}, {hi}]")]
    OutOfSupport { x: f64, lo: f64, hi: f64 },

    #[error("histogram contains no events")]
    EmptyHistogram,

    #[error("{} event(s) outside the interval, at indices {indices:?}", indices.len())]
    OutOfInterval { indices: Vec<usize> },

    #[error("all state amplitudes are zero")]
    DegenerateState,

    #[error("could not bracket the inverse CDF at u = {u}")]
    RootBracketFailure { u: f64 },

    #[error("norm drifted by {drift:e} (relative) in a single step")]
    UnstableStep { drift: f64 },

    #[error("time step {dt} exceeds the stability limit {limit} for this grid and potential")]
    TimeStepTooLarge { dt: f64, limit: f64 },

    #[error("residuals need two consecutive snapshots on the same grid")]
    InsufficientHistory,

    #[error("cannot fit a slope through {points} distinct N value(s)")]
    SlopeUndefined { points: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("{} contains no data rows", path.display())]
    EmptyFile { path: PathBuf },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.into(),
            message: message.into(),
        }
    }
}
