//! Streaming robust subspace tracking.
//!
//! Observations `y_t = l_t + x_t + v_t` arrive one at a time, where `l_t`
//! lives in a slowly changing low-dimensional subspace, `x_t` is a sparse
//! outlier vector, and `v_t` is small dense noise. The tracker separates
//! each frame into its outlier and low-rank parts, follows the subspace
//! through piecewise-constant changes with automatic change detection, and
//! optionally re-smooths past frames once an epoch's estimate has converged.
//!
//! Module map:
//! - [`geometry`]: orthonormal bases, principal angles, truncated SVD,
//!   coherence/RIC diagnostics, skew rotations.
//! - [`sparse`]: the projected sparse-recovery step (l1 minimization,
//!   support thresholding, least-squares debiasing).
//! - [`tracker`]: the detect/update state machine, known-change-time
//!   variant, offline smoothing, and parameter suggestion.
//! - [`init`]: initial subspace estimation (alternating hard-threshold
//!   SVD, oracle and random initializers).
//! - [`missing`]: the known-missing-entries (dynamic matrix completion)
//!   variant.
//! - [`scenario`]: synthetic ground-truth generation.
//! - [`metrics`], [`io`], [`config`], [`experiments`]: the experiment
//!   harness behind the `norst` CLI.

pub mod config;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod init;
pub mod io;
pub mod metrics;
pub mod missing;
pub mod scenario;
pub mod sparse;
pub mod tracker;

pub use error::{NorstError, Result};
pub use geometry::{sin_theta_max, Basis};
pub use sparse::{projected_cs_step, SparseEstimate};
pub use tracker::{suggest_params, FrameEstimate, Tracker, TrackerParams};



pub(crate) mod rng;
