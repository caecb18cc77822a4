//! Experiment drivers: seeded trials, aggregation, the phase-transition
//! grid, and the outlier-magnitude sweep. Trials are embarrassingly
//! parallel; aggregation always happens in seed order so parallel and
//! sequential execution produce identical results. `NORST_THREADS` caps
//! worker threads.

use std::path::Path;
use std::time::Instant;

use crate::config::{ExperimentConfig, InitSpec, RunMode};
use crate::error::{NorstError, Result};
use crate::init::{init_altproj_lite, init_oracle, init_random_orthogonal, InitConfig};
use crate::io;
use crate::metrics::{evaluate_run, MetricsReport};
use crate::missing::{mc_process_frame, MaskedFrame};
use crate::scenario::{gen_scenario, gen_support_stream, Scenario};
use crate::tracker::Tracker;

/// Aggregate over an experiment's trials. Per-trial reports are kept in
/// seed order.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub seeds: Vec<u64>,
    pub reports: Vec<MetricsReport>,
    /// Seeds whose trials failed, with the error text.
    pub failures: Vec<(u64, String)>,
}

impl ExperimentSummary {
    pub fn online_errors(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.rel_frob_err).collect()
    }

    pub fn offline_errors(&self) -> Vec<f64> {
        self.reports
            .iter()
            .filter_map(|r| r.rel_frob_err_offline)
            .collect()
    }

    pub fn mean_online_error(&self) -> f64 {
        mean(&self.online_errors())
    }

    pub fn median_online_error(&self) -> f64 {
        median(&self.online_errors())
    }

    pub fn mean_offline_error(&self) -> Option<f64> {
        let v = self.offline_errors();
        if v.is_empty() {
            None
        } else {
            Some(mean(&v))
        }
    }

    pub fn total_false_detections(&self) -> usize {
        self.reports.iter().map(|r| r.false_detections.len()).sum()
    }
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mid = s.len() / 2;
    if s.len() % 2 == 1 {
        s[mid]
    } else {
        0.5 * (s[mid - 1] + s[mid])
    }
}

/// Worker-thread cap: `NORST_THREADS` when set, else the machine default.
pub fn thread_cap() -> Option<usize> {
    std::env::var("NORST_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
}

fn build_init(cfg: &ExperimentConfig, scenario: &Scenario, seed: u64) -> Result<crate::Basis> {
    match cfg.init {
        InitSpec::AltprojLite => {
            let t_train = cfg.scenario.t_train;
            let y_train = scenario.observations.columns(0, t_train).into_owned();
            let init_cfg = InitConfig::new(t_train, cfg.scenario.r)
                .with_floor(cfg.scenario.x_min / 2.0);
            init_altproj_lite(&y_train, &init_cfg)
        }
        InitSpec::Oracle { target } => {
            init_oracle(&scenario.subspaces[0], target, seed ^ 0x9e37_79b9)
        }
        InitSpec::RandomOrthogonal => {
            init_random_orthogonal(cfg.scenario.n, cfg.scenario.r, seed ^ 0x524f_4d21)
        }
    }
}

/// Runs one seeded trial end to end and evaluates it.
pub fn run_trial(cfg: &ExperimentConfig, seed: u64) -> Result<MetricsReport> {
    let scenario = gen_scenario(&cfg.scenario, seed)?;
    let params = cfg.resolved_params()?;
    let p_init = build_init(cfg, &scenario, seed)?;
    let t_train = cfg.scenario.t_train;

    let mut tracker = match cfg.mode {
        RunMode::NorstKnown => Tracker::with_known_changes(
            p_init,
            params,
            t_train,
            cfg.scenario.change_times.clone(),
        )?,
        _ => Tracker::new(p_init, params, t_train)?,
    };

    let masks = if cfg.mode == RunMode::Mc {
        let model = cfg
            .mask
            .ok_or_else(|| NorstError::Config("mc mode requires a mask model".into()))?;
        Some(gen_support_stream(
            cfg.scenario.n,
            cfg.scenario.d,
            model,
            cfg.scenario.alpha,
            seed ^ 0x4d41_534b,
        )?)
    } else {
        None
    };

    let started = Instant::now();
    let mut frames = Vec::with_capacity(cfg.scenario.d - t_train);
    for t in t_train..cfg.scenario.d {
        let y = scenario.y_col(t);
        let fe = match &masks {
            Some(masks) => {
                let frame = MaskedFrame::new(y, masks[t].clone())?;
                mc_process_frame(&mut tracker, &frame)?
            }
            None => tracker.process_frame(&y)?,
        };
        frames.push(fe);
    }
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;

    let offline = if cfg.mode == RunMode::NorstOffline {
        Some(tracker.offline_smooth()?)
    } else {
        None
    };

    evaluate_run(
        &scenario,
        &frames,
        offline.as_deref(),
        tracker.detections(),
        seed,
        elapsed_ms,
    )
}

/// Runs all trials, optionally in parallel, aggregates in seed order, and
/// writes per-trial CSVs plus a summary when an output directory is set.
/// Per-trial errors are recorded, not fatal, unless every trial fails.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.trials).map(|i| cfg.base_seed + i as u64).collect();

    let outcomes: Vec<(u64, std::result::Result<MetricsReport, String>)> = if cfg.parallel
        && cfg.trials > 1
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(thread_cap().unwrap_or(0))
            .build()
            .map_err(|e| NorstError::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            seeds
                .par_iter()
                .map(|&seed| (seed, run_trial(cfg, seed).map_err(|e| e.to_string())))
                .collect()
        })
    } else {
        seeds
            .iter()
            .map(|&seed| (seed, run_trial(cfg, seed).map_err(|e| e.to_string())))
            .collect()
    };

    let mut reports = Vec::new();
    let mut kept_seeds = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(report) => {
                kept_seeds.push(seed);
                reports.push(report);
            }
            Err(msg) => failures.push((seed, msg)),
        }
    }
    if reports.is_empty() {
        return Err(NorstError::AllTrialsFailed(cfg.trials));
    }

    let summary = ExperimentSummary {
        seeds: kept_seeds,
        reports,
        failures,
    };
    if let Some(dir) = &cfg.out_dir {
        emit_experiment_files(dir, &summary)?;
    }
    Ok(summary)
}

fn emit_experiment_files(dir: &Path, summary: &ExperimentSummary) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| NorstError::io(dir.display().to_string(), e))?;
    for report in &summary.reports {
        let path = dir.join(format!("metrics_seed{}.csv", report.seed));
        io::write_metrics_csv(&path, report)?;
    }
    // Summary CSV: one row per trial.
    let path = dir.join("summary.csv");
    let mut text = String::from(
        "seed,rel_frob_err,rel_frob_err_offline,ms_per_frame,false_detections,max_delay\n",
    );
    for r in &summary.reports {
        let offline = r
            .rel_frob_err_offline
            .map(|v| format!("{v:.12e}"))
            .unwrap_or_default();
        let delay = r
            .max_delay()
            .map(|d| d.to_string())
            .unwrap_or_default();
        text.push_str(&format!(
            "{},{:.12e},{},{:.4},{},{}\n",
            r.seed,
            r.rel_frob_err,
            offline,
            r.ms_per_frame,
            r.false_detections.len(),
            delay
        ));
    }
    std::fs::write(&path, text).map_err(|e| NorstError::io(path.display().to_string(), e))?;

    // Mean per-frame curve, gnuplot-ready.
    if let Some(first) = summary.reports.first() {
        let frames = first.frames.len();
        let aligned = summary.reports.iter().all(|r| r.frames.len() == frames);
        if aligned && frames > 0 {
            let rows: Vec<Vec<f64>> = (0..frames)
                .map(|i| {
                    let t = first.frames[i].t as f64;
                    let sin = mean(
                        &summary
                            .reports
                            .iter()
                            .map(|r| r.frames[i].sin_theta)
                            .collect::<Vec<_>>(),
                    );
                    let rel = mean(
                        &summary
                            .reports
                            .iter()
                            .map(|r| r.frames[i].rel_err_l)
                            .collect::<Vec<_>>(),
                    );
                    vec![t, sin, rel]
                })
                .collect();
            io::write_dat(
                &dir.join("mean_curve.dat"),
                &["t", "mean_sin_theta", "mean_rel_err_l"],
                &rows,
            )?;
        }
    }
    Ok(())
}

/// One cell of the phase-transition grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCell {
    pub r: usize,
    pub b0: f64,
    pub success_rate: f64,
}

/// Empirical success probability over a (rank, row-fraction) grid:
/// Bernoulli supports at rate `b0`, success when the relative recovery
/// error stays below `success_threshold`. Offline errors are used when the
/// base mode smooths, online otherwise.
pub fn run_phase_transition(
    base: &ExperimentConfig,
    r_grid: &[usize],
    b0_grid: &[f64],
    trials: usize,
    success_threshold: f64,
) -> Result<Vec<PhaseCell>> {
    if r_grid.is_empty() || b0_grid.is_empty() {
        return Err(NorstError::Config("phase grids must be nonempty".into()));
    }
    let mut cells = Vec::with_capacity(r_grid.len() * b0_grid.len());
    for &r in r_grid {
        for &b0 in b0_grid {
            let mut cfg = base.clone();
            cfg.trials = trials;
            cfg.out_dir = None;
            cfg.scenario.r = r;
            cfg.scenario.support_post = crate::scenario::SupportModel::Bernoulli { rho: b0 };
            cfg.scenario.support_train =
                crate::scenario::SupportModel::Bernoulli { rho: 0.02 };
            cfg.validate()?;
            let summary = run_experiment(&cfg)?;
            let successes = summary
                .reports
                .iter()
                .map(|rep| rep.rel_frob_err_offline.unwrap_or(rep.rel_frob_err))
                .filter(|&e| e < success_threshold)
                .count();
            cells.push(PhaseCell {
                r,
                b0,
                success_rate: successes as f64 / summary.reports.len() as f64,
            });
        }
    }
    if let Some(dir) = &base.out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| NorstError::io(dir.display().to_string(), e))?;
        let rows: Vec<Vec<f64>> = cells
            .iter()
            .map(|c| vec![c.r as f64, c.b0, c.success_rate])
            .collect();
        io::write_dat(&dir.join("phase_grid.dat"), &["r", "b0", "success_rate"], &rows)?;
    }
    Ok(cells)
}

/// Result of the constant-magnitude sweep for one `x_min` value.
#[derive(Debug, Clone)]
pub struct XminPoint {
    pub x_min: f64,
    /// Median over trials of the mean subspace error across the final
    /// window.
    pub final_sin_theta: f64,
    pub summary: ExperimentSummary,
}

/// Sweeps the outlier magnitude with all nonzeros set to exactly `x_min`
/// (random signs), re-deriving the magnitude-tied thresholds
/// (`omega = x_min/2`, `xi = x_min/15`) per value as the algorithm's
/// parameter rules prescribe.
pub fn run_xmin_sweep(base: &ExperimentConfig, xmin_values: &[f64]) -> Result<Vec<XminPoint>> {
    if xmin_values.is_empty() {
        return Err(NorstError::Config("xmin grid must be nonempty".into()));
    }
    let mut out = Vec::with_capacity(xmin_values.len());
    for &v in xmin_values {
        let mut cfg = base.clone();
        cfg.out_dir = None;
        cfg.scenario.x_min = v;
        cfg.scenario.x_max = v;
        cfg.scenario.magnitude_mode = crate::scenario::MagnitudeMode::Constant;
        cfg.validate()?;
        let summary = run_experiment(&cfg)?;
        let alpha = cfg.resolved_params()?.alpha;
        let finals: Vec<f64> = summary
            .reports
            .iter()
            .map(|r| {
                let tail = r.frames.len().saturating_sub(alpha);
                mean(
                    &r.frames[tail..]
                        .iter()
                        .map(|f| f.sin_theta)
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        out.push(XminPoint {
            x_min: v,
            final_sin_theta: median(&finals),
            summary,
        });
    }
    if let Some(dir) = &base.out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| NorstError::io(dir.display().to_string(), e))?;
        let rows: Vec<Vec<f64>> = out
            .iter()
            .map(|p| vec![p.x_min, p.final_sin_theta])
            .collect();
        io::write_dat(&dir.join("xmin_sweep.dat"), &["x_min", "final_sin_theta"], &rows)?;
    }
    Ok(out)
}
