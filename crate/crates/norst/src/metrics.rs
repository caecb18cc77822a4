//! Per-frame and aggregate quality metrics for a tracking run against its
//! generating scenario.

use nalgebra::DVector;

use crate::error::Result;
use crate::geometry::sin_theta_max;
use crate::scenario::Scenario;
use crate::tracker::{FrameEstimate, OfflineEstimate};

/// Per-frame metric row. `detected_epoch` is the index of the change
/// detection that fired at this frame, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMetrics {
    pub t: usize,
    pub sin_theta: f64,
    pub rel_err_l: f64,
    pub support_precision: f64,
    pub support_recall: f64,
    pub detected_epoch: Option<usize>,
}

/// Pairing of a true change time with the detection that answered it.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvent {
    pub t_true: usize,
    pub t_hat: Option<usize>,
    /// `t_hat - t_true` when detected.
    pub delay: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub seed: u64,
    pub frames: Vec<FrameMetrics>,
    /// `||L_hat - L||_F / ||L||_F` over the tracked range.
    pub rel_frob_err: f64,
    /// Same for the offline-smoothed estimates when present.
    pub rel_frob_err_offline: Option<f64>,
    pub detections: Vec<DetectionEvent>,
    /// Detections that matched no true change.
    pub false_detections: Vec<usize>,
    pub ms_per_frame: f64,
}

impl MetricsReport {
    pub fn max_delay(&self) -> Option<usize> {
        self.detections.iter().filter_map(|d| d.delay).max()
    }

    pub fn all_changes_detected(&self) -> bool {
        self.detections.iter().all(|d| d.t_hat.is_some())
    }

    /// Mean of a per-frame metric over the run.
    pub fn mean_rel_err(&self) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        self.frames.iter().map(|f| f.rel_err_l).sum::<f64>() / self.frames.len() as f64
    }

    /// Final subspace error per epoch: for each scenario epoch, the
    /// sin-theta of the last frame inside it.
    pub fn final_sin_theta_per_epoch(&self, change_times: &[usize]) -> Vec<f64> {
        let mut boundaries: Vec<usize> = change_times.to_vec();
        boundaries.push(usize::MAX);
        let mut out = Vec::new();
        let mut prev_end = 0usize;
        for &b in &boundaries {
            let last = self
                .frames
                .iter()
                .filter(|f| f.t >= prev_end && f.t < b)
                .next_back();
            if let Some(f) = last {
                out.push(f.sin_theta);
            }
            prev_end = b;
            if b == usize::MAX {
                break;
            }
        }
        out
    }
}

fn precision_recall(predicted: &[usize], truth: &[usize]) -> (f64, f64) {
    let hits = {
        // Both sets are ascending.
        let mut i = 0;
        let mut j = 0;
        let mut hits = 0usize;
        while i < predicted.len() && j < truth.len() {
            match predicted[i].cmp(&truth[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    hits += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        hits
    };
    let precision = if predicted.is_empty() {
        1.0
    } else {
        hits as f64 / predicted.len() as f64
    };
    let recall = if truth.is_empty() {
        1.0
    } else {
        hits as f64 / truth.len() as f64
    };
    (precision, recall)
}

/// Matches detections to true change times: each true change claims the
/// first unclaimed detection that is at or after it and before the next
/// change; everything unclaimed is a false detection.
pub fn match_detections(
    change_times: &[usize],
    detections: &[usize],
) -> (Vec<DetectionEvent>, Vec<usize>) {
    let mut events = Vec::with_capacity(change_times.len());
    let mut claimed = vec![false; detections.len()];
    for (j, &t_true) in change_times.iter().enumerate() {
        let next = change_times.get(j + 1).copied().unwrap_or(usize::MAX);
        let found = detections
            .iter()
            .enumerate()
            .find(|(i, &d)| !claimed[*i] && d >= t_true && d < next);
        match found {
            Some((i, &d)) => {
                claimed[i] = true;
                events.push(DetectionEvent {
                    t_true,
                    t_hat: Some(d),
                    delay: Some(d - t_true),
                });
            }
            None => events.push(DetectionEvent {
                t_true,
                t_hat: None,
                delay: None,
            }),
        }
    }
    let false_detections = detections
        .iter()
        .zip(&claimed)
        .filter(|(_, &c)| !c)
        .map(|(&d, _)| d)
        .collect();
    (events, false_detections)
}

/// Builds the full report for a tracked run. `frames[i]` must correspond to
/// scenario frame `frames[i].t`; offline estimates, when given, must be
/// index-aligned with `frames`.
pub fn evaluate_run(
    scenario: &Scenario,
    frames: &[FrameEstimate],
    offline: Option<&[OfflineEstimate]>,
    detections: &[usize],
    seed: u64,
    elapsed_ms: f64,
) -> Result<MetricsReport> {
    let mut rows = Vec::with_capacity(frames.len());
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    let mut off_num = 0.0f64;
    // The subspace estimate only changes at refinement steps; cache the
    // angle per (estimate pointer, epoch) instead of recomputing per frame.
    let mut angle_cache: std::collections::HashMap<(usize, usize), f64> =
        std::collections::HashMap::new();
    for (i, fe) in frames.iter().enumerate() {
        let t = fe.t;
        let l_true = scenario.l_col(t);
        let l_norm = l_true.norm();
        let err = (&fe.l_hat - &l_true).norm();
        num += err * err;
        den += l_norm * l_norm;
        if let Some(off) = offline {
            let e = (&off[i].l_hat - &l_true).norm();
            off_num += e * e;
        }
        let (precision, recall) = precision_recall(&fe.support, &scenario.supports[t]);
        let epoch = scenario.epoch_at(t);
        let key = (std::sync::Arc::as_ptr(&fe.subspace) as usize, epoch);
        let sin_theta = match angle_cache.get(&key) {
            Some(&v) => v,
            None => {
                let v = sin_theta_max(&fe.subspace, scenario.subspace_at(t))?;
                angle_cache.insert(key, v);
                v
            }
        };
        rows.push(FrameMetrics {
            t,
            sin_theta,
            rel_err_l: if l_norm > 0.0 { err / l_norm } else { err },
            support_precision: precision,
            support_recall: recall,
            detected_epoch: fe.change_detected_at.map(|_| epoch),
        });
    }
    let den = den.max(f64::MIN_POSITIVE);
    let (events, false_detections) = match_detections(&scenario.config.change_times, detections);
    Ok(MetricsReport {
        seed,
        frames: rows,
        rel_frob_err: (num / den).sqrt(),
        rel_frob_err_offline: offline.map(|_| (off_num / den).sqrt()),
        detections: events,
        false_detections,
        ms_per_frame: if frames.is_empty() {
            0.0
        } else {
            elapsed_ms / frames.len() as f64
        },
    })
}

/// Recomputes the aggregate relative Frobenius error from stored estimate
/// columns; used to validate report self-consistency.
pub fn rel_frob_from_columns<'a>(
    estimates: impl Iterator<Item = (usize, &'a DVector<f64>)>,
    scenario: &Scenario,
) -> f64 {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (t, l_hat) in estimates {
        let l_true = scenario.l_col(t);
        num += (l_hat - &l_true).norm_squared();
        den += l_true.norm_squared();
    }
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}
