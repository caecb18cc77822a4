//! The tracker state machine: per-frame outlier/low-rank separation with
//! subspace refinement on a sliding window, automatic change detection, a
//! known-change-times variant, and offline smoothing.
//!
//! Schedule, in streamed-frame counts `c = 1, 2, ...` from the first
//! tracked frame: the run opens in the update phase, refining the initial
//! estimate with rank-r SVDs at `c = u * alpha` and finalizing after `K` of
//! them. It then toggles between a detect phase, which evaluates the
//! projected-covariance statistic every `alpha` frames past the last
//! finalize, and an update phase entered when the statistic crosses
//! `lambda_thresh`, running `K` more SVDs spaced `alpha` frames from the
//! detection point. Frame indices reported to callers are global:
//! `t = t_start + c - 1` where `t_start` counts the training frames the
//! initializer consumed.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{NorstError, Result};
use crate::geometry::{lambda_max_sym, orthonormalize_trunc, top_r_left_singular_vectors, Basis};
use crate::sparse::{
    known_support_step, ls_debias, projected_cs_step_hinted, ProjectedObservation, SparseEstimate,
};

/// Algorithm knobs. Use [`suggest_params`] to derive them from scenario
/// facts the way the reference experiments do.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrackerParams {
    /// Subspace dimension.
    pub r: usize,
    /// Refinement SVDs per epoch (`K`).
    pub k_steps: usize,
    /// Window length in frames.
    pub alpha: usize,
    /// Support threshold on the l1 solution.
    pub omega_supp: f64,
    /// Noise-ball radius for the l1 step.
    pub xi: f64,
    /// Detection threshold on the projected covariance statistic.
    pub lambda_thresh: f64,
    /// Re-derive `omega_supp` and `xi` each frame from the smallest
    /// recovered outlier magnitude of the previous frame.
    pub adaptive_thresholds: bool,
}

impl TrackerParams {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(NorstError::invalid("r", "must be >= 1"));
        }
        if self.k_steps == 0 {
            return Err(NorstError::invalid("k_steps", "must be >= 1"));
        }
        if self.alpha < self.r {
            return Err(NorstError::invalid(
                "alpha",
                format!("window {} shorter than rank {}", self.alpha, self.r),
            ));
        }
        for (name, v) in [
            ("omega_supp", self.omega_supp),
            ("xi", self.xi),
            ("lambda_thresh", self.lambda_thresh),
        ] {
            if !(v > 0.0) {
                return Err(NorstError::invalid(name, "must be > 0"));
            }
        }
        Ok(())
    }
}

/// Defaults from the problem facts: `alpha = r ceil(log2 n)`,
/// `K = ceil(log2(1/zeta))`, `omega_supp = x_min / 2`, `xi = x_min / 15`,
/// `lambda_thresh = 2 zeta^2 lambda_plus`.
pub fn suggest_params(
    n: usize,
    r: usize,
    f: f64,
    lambda_plus: f64,
    x_min: f64,
    zeta: f64,
) -> Result<TrackerParams> {
    if n == 0 || r == 0 || r > n {
        return Err(NorstError::invalid("n/r", "need 1 <= r <= n"));
    }
    if !(f >= 1.0) {
        return Err(NorstError::invalid("f", "condition number must be >= 1"));
    }
    if !(lambda_plus > 0.0) || !(x_min > 0.0) {
        return Err(NorstError::invalid("lambda_plus/x_min", "must be > 0"));
    }
    if !(zeta > 0.0 && zeta <= 0.01) {
        return Err(NorstError::invalid("zeta", "must be in (0, 0.01]"));
    }
    let alpha = r * (n as f64).log2().ceil() as usize;
    let k_steps = (1.0 / zeta).log2().ceil() as usize;
    Ok(TrackerParams {
        r,
        k_steps: k_steps.max(1),
        alpha: alpha.max(r),
        omega_supp: x_min / 2.0,
        xi: x_min / 15.0,
        lambda_thresh: 2.0 * zeta * zeta * lambda_plus,
        adaptive_thresholds: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Detect,
    Update,
}

/// A finalized subspace epoch.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    /// Streamed-frame count at which the epoch's update phase anchored
    /// (0 for the initial epoch).
    pub detected_count: usize,
    /// Streamed-frame count at which the estimate finalized.
    pub finalized_count: usize,
    /// Global frame index of the detection; `None` for the initial epoch.
    pub t_hat_global: Option<usize>,
    /// Refinement SVDs actually performed (short of `K` when a known change
    /// truncates the epoch).
    pub refine_steps: usize,
    pub basis: Arc<Basis>,
}

/// Per-frame output.
#[derive(Debug, Clone)]
pub struct FrameEstimate {
    /// Global frame index.
    pub t: usize,
    pub x_hat: DVector<f64>,
    pub l_hat: DVector<f64>,
    pub support: Vec<usize>,
    /// Subspace estimate in force after this frame.
    pub subspace: Arc<Basis>,
    /// Set when this frame triggered a change detection.
    pub change_detected_at: Option<usize>,
    /// Shrinkage iterations spent on this frame (0 on known-support paths).
    pub shrink_iters: usize,
}

impl FrameEstimate {
    /// The observation this estimate decomposes: `x_hat + l_hat`.
    pub fn reconstruct(&self) -> DVector<f64> {
        &self.x_hat + &self.l_hat
    }
}

#[derive(Debug, Clone)]
enum ChangeSchedule {
    /// Detection by the projected covariance statistic.
    Automatic,
    /// Change times known a priori (global frame indices, ascending).
    Known(Vec<usize>),
}

/// Streaming tracker. One instance is sequential; distinct instances are
/// independent and may run concurrently.
#[derive(Debug, Clone)]
pub struct Tracker {
    params: TrackerParams,
    n: usize,
    t_start: usize,
    schedule: ChangeSchedule,
    next_known_change: usize,
    phase: Phase,
    /// Streamed frames processed so far.
    count: usize,
    /// Anchor of the current update phase in count space.
    detected_count: usize,
    /// Global detection index for the epoch being refined.
    current_t_hat: Option<usize>,
    /// Detect-cadence anchor: count at the last finalize minus one.
    fin_count: usize,
    refine_count: usize,
    p_current: Arc<Basis>,
    p_prev: Arc<Basis>,
    p_init: Arc<Basis>,
    window: VecDeque<DVector<f64>>,
    epochs: Vec<EpochRecord>,
    detections: Vec<usize>,
    lambda_hint: Option<f64>,
    /// Previous frame's smallest recovered outlier magnitude (adaptive mode).
    last_support_min: Option<f64>,
    retain_history: bool,
    stored_observations: Vec<DVector<f64>>,
    stored_supports: Vec<Vec<usize>>,
}

impl Tracker {
    /// Tracker with automatic change detection. `t_start` is the global
    /// index of the first frame that will be streamed (the number of
    /// training frames consumed by the initializer).
    pub fn new(p_init: Basis, params: TrackerParams, t_start: usize) -> Result<Self> {
        Self::build(p_init, params, t_start, ChangeSchedule::Automatic)
    }

    /// Tracker that trusts the provided change times instead of detecting.
    /// Refinement for a change at `t_j` runs its k-th SVD at global frame
    /// `t_j + k alpha - 1`.
    pub fn with_known_changes(
        p_init: Basis,
        params: TrackerParams,
        t_start: usize,
        mut change_times: Vec<usize>,
    ) -> Result<Self> {
        change_times.sort_unstable();
        Self::build(p_init, params, t_start, ChangeSchedule::Known(change_times))
    }

    fn build(
        p_init: Basis,
        params: TrackerParams,
        t_start: usize,
        schedule: ChangeSchedule,
    ) -> Result<Self> {
        params.validate()?;
        if p_init.dim() != params.r {
            return Err(NorstError::DimensionMismatch {
                context: "tracker init basis rank vs params.r",
                left: p_init.dim(),
                right: params.r,
            });
        }
        let p_init = Arc::new(p_init);
        Ok(Tracker {
            n: p_init.ambient_dim(),
            t_start,
            schedule,
            next_known_change: 0,
            // The run opens in the update phase, refining the initial
            // estimate before any detection is attempted.
            phase: Phase::Update,
            count: 0,
            detected_count: 0,
            current_t_hat: None,
            fin_count: 0,
            refine_count: 0,
            p_current: Arc::clone(&p_init),
            p_prev: Arc::clone(&p_init),
            p_init,
            window: VecDeque::with_capacity(params.alpha),
            epochs: Vec::new(),
            detections: Vec::new(),
            lambda_hint: None,
            last_support_min: None,
            retain_history: true,
            stored_observations: Vec::new(),
            stored_supports: Vec::new(),
            params,
        })
    }

    /// Disable observation retention (bounded-memory mode: only the window
    /// is kept). Offline smoothing then needs externally stored
    /// observations; see [`offline_smooth_stream`].
    pub fn set_retain_history(&mut self, retain: bool) {
        self.retain_history = retain;
        if !retain {
            self.stored_observations.clear();
            self.stored_supports.clear();
        }
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn current_basis(&self) -> &Arc<Basis> {
        &self.p_current
    }

    pub fn previous_basis(&self) -> &Arc<Basis> {
        &self.p_prev
    }

    pub fn initial_basis(&self) -> &Arc<Basis> {
        &self.p_init
    }

    /// Finalized epochs so far.
    pub fn epochs(&self) -> &[EpochRecord] {
        &self.epochs
    }

    /// Global frame indices at which changes were detected.
    pub fn detections(&self) -> &[usize] {
        &self.detections
    }

    pub fn frames_processed(&self) -> usize {
        self.count
    }

    /// Global index of the next frame to be processed.
    pub fn next_frame_index(&self) -> usize {
        self.t_start + self.count
    }

    fn thresholds(&self) -> (f64, f64) {
        if self.params.adaptive_thresholds {
            if let Some(m) = self.last_support_min {
                let m = m.max(1e-6);
                return (m / 2.0, m / 15.0);
            }
        }
        (self.params.omega_supp, self.params.xi)
    }

    /// Process one frame. Errors from the sparse step propagate and leave
    /// the frame unconsumed.
    pub fn process_frame(&mut self, y_t: &DVector<f64>) -> Result<FrameEstimate> {
        if y_t.len() != self.n {
            return Err(NorstError::DimensionMismatch {
                context: "process_frame: observation dimension",
                left: y_t.len(),
                right: self.n,
            });
        }
        let (omega, xi) = self.thresholds();
        let (est, lambda) = projected_cs_step_hinted(
            y_t,
            Arc::clone(&self.p_current),
            xi,
            omega,
            self.lambda_hint,
        )?;
        self.lambda_hint = Some(lambda);
        self.advance(y_t, est)
    }

    /// Process one frame whose outlier support is known a priori (the
    /// missing-data path): least-squares fill on the given support, no
    /// shrinkage iterations.
    pub fn process_frame_known_support(
        &mut self,
        y_t: &DVector<f64>,
        support: &[usize],
    ) -> Result<FrameEstimate> {
        if y_t.len() != self.n {
            return Err(NorstError::DimensionMismatch {
                context: "process_frame_known_support: observation dimension",
                left: y_t.len(),
                right: self.n,
            });
        }
        let est = known_support_step(y_t, Arc::clone(&self.p_current), support)?;
        self.advance(y_t, est)
    }

    /// Shared frame advance: window bookkeeping, then the detect/update
    /// phase machine.
    fn advance(&mut self, y_t: &DVector<f64>, est: SparseEstimate) -> Result<FrameEstimate> {
        self.count += 1;
        let global_t = self.t_start + self.count - 1;

        self.last_support_min = est
            .support
            .iter()
            .map(|&i| est.x_hat[i].abs())
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.min(v)))
            });

        if self.window.len() == self.params.alpha {
            self.window.pop_front();
        }
        self.window.push_back(est.l_hat.clone());
        if self.retain_history {
            self.stored_observations.push(y_t.clone());
            self.stored_supports.push(est.support.clone());
        }

        // Known change times preempt detection. The update anchors one
        // count earlier so the k-th SVD lands at t_j + k alpha - 1 with the
        // first window starting exactly at the change frame.
        if let ChangeSchedule::Known(times) = &self.schedule {
            if self.next_known_change < times.len()
                && global_t == times[self.next_known_change]
            {
                self.next_known_change += 1;
                if self.phase == Phase::Update {
                    self.finalize_epoch();
                }
                self.phase = Phase::Update;
                self.detected_count = self.count - 1;
                self.refine_count = 0;
                self.current_t_hat = Some(global_t);
                self.detections.push(global_t);
            }
        }

        let mut change_detected_at = None;
        match self.phase {
            Phase::Detect => {
                let since_fin = self.count.saturating_sub(self.fin_count);
                if matches!(self.schedule, ChangeSchedule::Automatic)
                    && since_fin > 0
                    && since_fin % self.params.alpha == 0
                    && self.window.len() == self.params.alpha
                {
                    let stat = detection_stat_from_window(
                        self.window.make_contiguous(),
                        &self.p_prev,
                    );
                    if stat >= self.params.lambda_thresh {
                        self.phase = Phase::Update;
                        self.detected_count = self.count;
                        self.refine_count = 0;
                        self.current_t_hat = Some(global_t);
                        self.detections.push(global_t);
                        change_detected_at = Some(global_t);
                    }
                }
            }
            Phase::Update => {
                let since_det = self.count - self.detected_count;
                if since_det > 0 && since_det % self.params.alpha == 0 {
                    debug_assert_eq!(self.window.len(), self.params.alpha);
                    let matrix = window_matrix(self.window.make_contiguous());
                    let top = top_r_left_singular_vectors(&matrix, self.params.r)?;
                    self.p_current = Arc::new(top.basis);
                    self.refine_count += 1;
                    if self.refine_count == self.params.k_steps {
                        self.finalize_epoch();
                    }
                }
            }
        }

        Ok(FrameEstimate {
            t: global_t,
            x_hat: est.x_hat,
            l_hat: est.l_hat,
            support: est.support,
            subspace: Arc::clone(&self.p_current),
            change_detected_at,
            shrink_iters: est.shrink_iters,
        })
    }

    fn finalize_epoch(&mut self) {
        self.p_prev = Arc::clone(&self.p_current);
        self.epochs.push(EpochRecord {
            detected_count: self.detected_count,
            finalized_count: self.count,
            t_hat_global: self.current_t_hat.take(),
            refine_steps: self.refine_count,
            basis: Arc::clone(&self.p_current),
        });
        self.phase = Phase::Detect;
        self.fin_count = self.count.saturating_sub(1);
        self.refine_count = 0;
    }

    /// Detection statistic over the current window against the last
    /// finalized subspace; `None` while the window is filling.
    pub fn current_detection_stat(&mut self) -> Option<f64> {
        if self.window.len() < self.params.alpha {
            return None;
        }
        Some(detection_stat_from_window(
            self.window.make_contiguous(),
            &self.p_prev,
        ))
    }

    /// Offline smoothing over the retained history. See
    /// [`offline_smooth_stream`] for the standalone form.
    pub fn offline_smooth(&self) -> Result<Vec<OfflineEstimate>> {
        if !self.retain_history {
            return Err(NorstError::Config(
                "tracker ran in bounded-memory mode; smooth from stored observations instead"
                    .into(),
            ));
        }
        offline_smooth_stream(
            &self.stored_observations,
            &self.stored_supports,
            &self.epochs,
            &self.p_init,
        )
    }
}

/// Smoothed per-frame output of offline re-estimation.
#[derive(Debug, Clone)]
pub struct OfflineEstimate {
    pub x_hat: DVector<f64>,
    pub l_hat: DVector<f64>,
}

/// Conjugate-gradient budget for offline re-solves. The widened projector
/// can contain estimation-error directions that concentrate on outlier
/// supports, which drags the restricted condition number far above the
/// online case; the solve must be allowed to run until the residual
/// actually drops.
const OFFLINE_CG_TOL: f64 = 1e-11;
const OFFLINE_CG_ITERS: usize = 400;

/// Re-solves every frame against the union of the neighboring finalized
/// subspace estimates: frames between the (j-1)-th and j-th finalizes use
/// `[P_{j-1}, (I - P_{j-1} P_{j-1}') P_j]` (orthonormalized, dependent
/// directions dropped). Frames before the first finalize are re-solved
/// against that first finalized estimate (it refines the initializer toward
/// the same subspace, so widening with the initializer would only inject
/// its error directions), and frames after the last finalize keep the last
/// estimate. The recorded supports are reused; only the projector changes.
pub fn offline_smooth_stream(
    observations: &[DVector<f64>],
    supports: &[Vec<usize>],
    epochs: &[EpochRecord],
    p_init: &Basis,
) -> Result<Vec<OfflineEstimate>> {
    if observations.len() != supports.len() {
        return Err(NorstError::DimensionMismatch {
            context: "offline smoothing: observations vs supports",
            left: observations.len(),
            right: supports.len(),
        });
    }
    let total = observations.len();
    let mut out = Vec::with_capacity(total);
    if total == 0 {
        return Ok(out);
    }

    // Segments [start, end) in 0-based stream indices with their projector.
    let mut segments: Vec<(usize, usize, Basis)> = Vec::new();
    if epochs.is_empty() {
        segments.push((0, total, p_init.clone()));
    } else {
        let head_end = (epochs[0].finalized_count - 1).min(total);
        segments.push((0, head_end, (*epochs[0].basis).clone()));
        for j in 1..epochs.len() {
            let lo = (epochs[j - 1].finalized_count - 1).min(total);
            let hi = (epochs[j].finalized_count - 1).min(total);
            segments.push((
                lo,
                hi,
                union_basis(&epochs[j - 1].basis, &epochs[j].basis)?,
            ));
        }
        let last = epochs.last().expect("nonempty");
        let lo = (last.finalized_count - 1).min(total);
        segments.push((lo, total, (*last.basis).clone()));
    }

    for (lo, hi, basis) in segments {
        let basis = Arc::new(basis);
        for idx in lo..hi {
            let obs = ProjectedObservation::new(&observations[idx], Arc::clone(&basis))?;
            let x_hat = ls_debias(&obs, &supports[idx], OFFLINE_CG_TOL, OFFLINE_CG_ITERS)?;
            let l_hat = &observations[idx] - &x_hat;
            out.push(OfflineEstimate { x_hat, l_hat });
        }
    }
    Ok(out)
}

/// `[a, (I - a a') b]` orthonormalized, dropping directions of `b` already
/// inside `a` (at most dim(a) + dim(b) columns survive).
fn union_basis(a: &Basis, b: &Basis) -> Result<Basis> {
    let residual = a.project_out_mat(b.cols());
    let mut stacked = DMatrix::zeros(a.ambient_dim(), a.dim() + b.dim());
    stacked.columns_mut(0, a.dim()).copy_from(a.cols());
    stacked.columns_mut(a.dim(), b.dim()).copy_from(&residual);
    let (basis, _dropped) = orthonormalize_trunc(&stacked, 1e-8)?;
    Ok(basis)
}

/// Largest eigenvalue of `(1/alpha) sum_t Phi l_t l_t' Phi` over the last
/// `alpha` window vectors, with `Phi = I - P_ref P_ref'`. Errors when fewer
/// than `alpha` vectors are supplied.
pub fn compute_detection_stat(
    window: &[DVector<f64>],
    alpha: usize,
    p_ref: &Basis,
) -> Result<f64> {
    if window.len() < alpha || alpha == 0 {
        return Err(NorstError::WindowUnderfull {
            have: window.len(),
            need: alpha,
        });
    }
    Ok(detection_stat_from_window(
        &window[window.len() - alpha..],
        p_ref,
    ))
}

fn detection_stat_from_window(window: &[DVector<f64>], p_ref: &Basis) -> f64 {
    let alpha = window.len();
    let n = window[0].len();
    let mut projected = DMatrix::zeros(n, alpha);
    for (c, l) in window.iter().enumerate() {
        projected.set_column(c, &p_ref.project_out(l));
    }
    let gram = projected.tr_mul(&projected);
    lambda_max_sym(&gram).max(0.0) / alpha as f64
}

fn window_matrix(window: &[DVector<f64>]) -> DMatrix<f64> {
    let n = window[0].len();
    let mut m = DMatrix::zeros(n, window.len());
    for (c, l) in window.iter().enumerate() {
        m.set_column(c, l);
    }
    m
}
