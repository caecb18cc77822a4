//! Behavioral tests for the tracker on generated scenarios: detection
//! timing, refinement decay, support recovery, and offline dominance.

use norst::geometry::sin_theta_max;
use norst::init::{init_altproj_lite, init_oracle, InitConfig};
use norst::scenario::{gen_scenario, Scenario, ScenarioConfig};
use norst::tracker::{compute_detection_stat, Phase, Tracker, TrackerParams};

fn desk_params() -> TrackerParams {
    // Matches ScenarioConfig::desk_moving_object: n = 200, r = 10,
    // alpha = 100, f = 32, x_min = 20.
    let lambda_plus = 32.0 / 3.0;
    let zeta = 1e-3;
    TrackerParams {
        r: 10,
        k_steps: 6,
        alpha: 100,
        omega_supp: 10.0,
        xi: 20.0 / 15.0,
        lambda_thresh: 2.0 * zeta * zeta * lambda_plus,
        adaptive_thresholds: false,
    }
}

fn run_auto(scenario: &Scenario, params: &TrackerParams) -> (Tracker, Vec<norst::FrameEstimate>) {
    let cfg = &scenario.config;
    let y_train = scenario
        .observations
        .columns(0, cfg.t_train)
        .into_owned();
    let init_cfg = InitConfig::new(cfg.t_train, cfg.r).with_floor(cfg.x_min / 2.0);
    let p_init = init_altproj_lite(&y_train, &init_cfg).unwrap();
    let mut tracker = Tracker::new(p_init, params.clone(), cfg.t_train).unwrap();
    let mut frames = Vec::with_capacity(cfg.d - cfg.t_train);
    for t in cfg.t_train..cfg.d {
        frames.push(tracker.process_frame(&scenario.y_col(t)).unwrap());
    }
    (tracker, frames)
}

#[test]
fn desk_scenario_tracks_and_detects() {
    let cfg = ScenarioConfig::desk_moving_object();
    let scenario = gen_scenario(&cfg, 314).unwrap();
    let params = desk_params();
    let started = std::time::Instant::now();
    let (tracker, frames) = run_auto(&scenario, &params);
    let per_frame = started.elapsed().as_secs_f64() / frames.len() as f64;
    println!("per-frame: {:.3} ms", per_frame * 1e3);

    // Both changes detected within [t_j, t_j + 2 alpha].
    let detections = tracker.detections();
    assert_eq!(detections.len(), 2, "detections: {detections:?}");
    for (&t_hat, &t_j) in detections.iter().zip(&cfg.change_times) {
        assert!(
            t_hat >= t_j && t_hat <= t_j + 2 * cfg.alpha,
            "detection {t_hat} for change {t_j}"
        );
    }

    // Final subspace error per epoch at the zeta scale.
    let last = frames.last().unwrap();
    let err = sin_theta_max(&last.subspace, scenario.subspace_at(cfg.d - 1)).unwrap();
    assert!(err <= 0.01, "final subspace error {err}");

    // Support recovery away from transitions.
    let mut exact = 0usize;
    let mut considered = 0usize;
    for fe in &frames {
        let t = fe.t;
        let in_transient = cfg
            .change_times
            .iter()
            .any(|&c| t >= c && t < c + (params.k_steps + 1) * params.alpha)
            || t < cfg.t_train + (params.k_steps + 1) * params.alpha;
        if in_transient {
            continue;
        }
        considered += 1;
        if fe.support == scenario.supports[t] {
            exact += 1;
        }
    }
    let rate = exact as f64 / considered as f64;
    assert!(rate >= 0.99, "support recovery rate {rate}");

    // Offline smoothing dominates online near changes.
    let smoothed = tracker.offline_smooth().unwrap();
    let mut offline_better = 0usize;
    let mut window_frames = 0usize;
    for (i, fe) in frames.iter().enumerate() {
        let t = fe.t;
        let near_change = cfg
            .change_times
            .iter()
            .any(|&c| t >= c && t < c + params.k_steps * params.alpha);
        if !near_change {
            continue;
        }
        window_frames += 1;
        let l_true = scenario.l_col(t);
        let on = (&fe.l_hat - &l_true).norm();
        let off = (&smoothed[i].l_hat - &l_true).norm();
        if off <= on + 1e-12 {
            offline_better += 1;
        }
    }
    let frac = offline_better as f64 / window_frames.max(1) as f64;
    assert!(
        frac >= 0.95,
        "offline dominated on only {frac} of transition frames"
    );
}

#[test]
fn stationary_run_never_detects() {
    let mut cfg = ScenarioConfig::desk_moving_object();
    cfg.change_times = vec![];
    cfg.d = 1500;
    let params = desk_params();
    for seed in 0..3u64 {
        let scenario = gen_scenario(&cfg, 1000 + seed).unwrap();
        let (tracker, _) = run_auto(&scenario, &params);
        assert!(
            tracker.detections().is_empty(),
            "seed {seed}: false detections {:?}",
            tracker.detections()
        );
    }
}

#[test]
fn detection_stat_brackets() {
    // Post-change windows push the statistic above the threshold scale;
    // converged pre-change windows stay below it.
    let cfg = ScenarioConfig::desk_moving_object();
    let params = desk_params();
    let lambda_minus = 1.0 / 3.0;
    let scenario = gen_scenario(&cfg, 99).unwrap();
    let (tracker, frames) = run_auto(&scenario, &params);
    let _ = tracker;

    // Window fully inside the second epoch, right after the change, projected
    // against an accurate estimate of P_0: statistic must exceed
    // 0.28 lambda^- sin^2(theta).
    let t_change = cfg.change_times[0];
    let p0_hat = init_oracle(&scenario.subspaces[0], 1e-4, 3).unwrap();
    let window: Vec<_> = (t_change..t_change + params.alpha)
        .map(|t| {
            let i = t - cfg.t_train;
            frames[i].l_hat.clone()
        })
        .collect();
    let stat = compute_detection_stat(&window, params.alpha, &p0_hat).unwrap();
    let change = sin_theta_max(&scenario.subspaces[1], &scenario.subspaces[0]).unwrap();
    let lower = 0.28 * lambda_minus * change * change;
    assert!(
        stat >= lower,
        "post-change stat {stat} below 0.28 lambda- sin^2 = {lower}"
    );
    assert!(stat >= params.lambda_thresh);

    // Converged window before the change against the truth-aligned basis.
    let window: Vec<_> = (t_change - params.alpha..t_change)
        .map(|t| frames[t - cfg.t_train].l_hat.clone())
        .collect();
    let stat = compute_detection_stat(&window, params.alpha, &scenario.subspaces[0]).unwrap();
    assert!(
        stat < params.lambda_thresh,
        "pre-change stat {stat} crosses threshold {}",
        params.lambda_thresh
    );
}

#[test]
fn known_changes_matches_auto_quality() {
    let cfg = ScenarioConfig::desk_moving_object();
    let scenario = gen_scenario(&cfg, 2718).unwrap();
    let params = desk_params();

    let (auto_tracker, auto_frames) = run_auto(&scenario, &params);
    let y_train = scenario.observations.columns(0, cfg.t_train).into_owned();
    let init_cfg = InitConfig::new(cfg.t_train, cfg.r).with_floor(cfg.x_min / 2.0);
    let p_init = init_altproj_lite(&y_train, &init_cfg).unwrap();
    let mut known = Tracker::with_known_changes(
        p_init,
        params.clone(),
        cfg.t_train,
        cfg.change_times.clone(),
    )
    .unwrap();
    let mut known_frames = Vec::new();
    for t in cfg.t_train..cfg.d {
        known_frames.push(known.process_frame(&scenario.y_col(t)).unwrap());
    }
    assert_eq!(auto_tracker.epochs().len(), known.epochs().len());

    // Final per-epoch subspace error of the known-times run is within a
    // factor 2 of the automatic run.
    let auto_final = sin_theta_max(
        &auto_frames.last().unwrap().subspace,
        scenario.subspace_at(cfg.d - 1),
    )
    .unwrap();
    let known_final = sin_theta_max(
        &known_frames.last().unwrap().subspace,
        scenario.subspace_at(cfg.d - 1),
    )
    .unwrap();
    assert!(
        known_final <= auto_final * 2.0 + 1e-9,
        "known {known_final} vs auto {auto_final}"
    );
    assert_eq!(known.phase(), Phase::Detect);
}

#[test]
fn cs_error_bound_seven_xi() {
    // With an accurate subspace estimate on compliant frames, the raw l1
    // solution lands within 7 xi of the true outlier on >= 99% of frames.
    use norst::sparse::l1_min_noisy_hinted;
    use norst::sparse::ProjectedObservation;
    use std::sync::Arc;

    let cfg = ScenarioConfig::desk_moving_object();
    let scenario = gen_scenario(&cfg, 77).unwrap();
    let params = desk_params();
    let xi = params.xi;
    let mut ok = 0usize;
    let mut total = 0usize;
    let mut hint = None;
    for epoch in 0..=cfg.change_times.len() {
        let p_hat = Arc::new(init_oracle(&scenario.subspaces[epoch], 5e-4, 11).unwrap());
        let start = if epoch == 0 {
            cfg.t_train
        } else {
            cfg.change_times[epoch - 1] + 300
        };
        for t in (start..start + 400).step_by(2) {
            if scenario.epoch_at(t) != epoch {
                continue;
            }
            let y = scenario.y_col(t);
            let obs = ProjectedObservation::new(&y, Arc::clone(&p_hat)).unwrap();
            let sol = l1_min_noisy_hinted(&obs, xi, 1e-4, hint).unwrap();
            hint = Some(sol.lambda);
            let x_true = scenario.x_col(t);
            total += 1;
            if (&sol.x - &x_true).norm() <= 7.0 * xi {
                ok += 1;
            }
        }
    }
    let rate = ok as f64 / total as f64;
    assert!(rate >= 0.99, "7xi bound held on only {rate} of {total} frames");
}
