//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NorstError>;

#[derive(Debug, Error)]
pub enum NorstError {
    #[error("dimension mismatch in {context}: {left} vs {right}")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("rank-deficient input: numerical rank {rank} < {expected} at tolerance {tol:e}")]
    RankDeficient {
        rank: usize,
        expected: usize,
        tol: f64,
    },

    #[error("matrix is not skew-symmetric: max |B + B'| entry = {deviation:e}")]
    NotSkewSymmetric { deviation: f64 },

    #[error(
        "exact RIC enumeration infeasible: C({n}, {s}) = {combinations} supports exceeds {max}; \
         use bound mode"
    )]
    RicEnumerationTooLarge {
        n: usize,
        s: usize,
        combinations: u128,
        max: u128,
    },

    /// The shrinkage solver hit its iteration cap before meeting the residual
    /// target. Carries the last iterate so callers can inspect or reuse it.
    #[error("l1 solver stopped after {iters} iterations with residual {residual:e} > {target:e}")]
    L1NoConvergence {
        iters: usize,
        residual: f64,
        target: f64,
        last_iterate: Box<[f64]>,
    },

    #[error(
        "restricted system is singular (smallest curvature {curvature:e}): support too large \
         or it collides with the subspace"
    )]
    SingularSupportSystem { curvature: f64 },

    #[error("window holds {have} frames but {need} are required")]
    WindowUnderfull { have: usize, need: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {path} at row {row}: {message}")]
    Parse {
        path: String,
        row: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),
}

impl NorstError {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        NorstError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        NorstError::Io {
            path: path.into(),
            source,
        }
    }
}
