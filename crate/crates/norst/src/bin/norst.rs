//! Experiment CLI: scenario generation, tracking runs, the missing-data
//! variant, the phase-transition grid, the outlier-magnitude sweep, and
//! metrics re-validation. `NORST_THREADS` caps trial parallelism.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use norst::config::{ExperimentConfig, InitSpec, RunMode};
use norst::error::NorstError;
use norst::experiments::{run_experiment, run_phase_transition, run_xmin_sweep};
use norst::io::{read_matrix, read_metrics_csv, ScenarioBundle};
use norst::metrics::evaluate_run;
use norst::missing::{mc_process_frame, MaskedFrame};
use norst::scenario::{gen_scenario, gen_support_stream, Scenario, SupportModel};
use norst::tracker::Tracker;

#[derive(Parser)]
#[command(
    name = "norst",
    about = "Streaming robust subspace tracking experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario and save it for replay.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory the scenario bundle is written to.
        #[arg(long)]
        out_dir: PathBuf,
        /// Also emit a parallel mask file drawn at this Bernoulli rate.
        #[arg(long)]
        mask_rho: Option<f64>,
    },
    /// Run the tracker over a saved or freshly generated scenario.
    Track {
        #[command(flatten)]
        common: CommonArgs,
        /// Scenario bundle directory from `simulate`; omitted = generate.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Mask file for mc-mode replay of a saved scenario.
        #[arg(long)]
        masks: Option<PathBuf>,
    },
    /// Missing-data (matrix completion) tracking with known masks.
    Mc {
        #[command(flatten)]
        common: CommonArgs,
        /// Bernoulli missing rate when no mask model is configured.
        #[arg(long, default_value_t = 0.05)]
        rho: f64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Empirical success-probability grid over (r, b0).
    Phase {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated subspace dimensions.
        #[arg(long, value_delimiter = ',', default_value = "5,10")]
        r_grid: Vec<usize>,
        /// Comma-separated row outlier fractions.
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.15,0.3,0.45")]
        b0_grid: Vec<f64>,
        /// Success when relative error is below this.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Constant-magnitude outlier sweep.
    Xmin {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated x_min values.
        #[arg(long, value_delimiter = ',', default_value = "0.5,5,10")]
        values: Vec<f64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Re-validate saved outputs: metrics CSV schema, and the aggregate
    /// error recomputed from stored estimate/truth matrices.
    Report {
        /// Per-frame metrics CSV to validate.
        #[arg(long)]
        metrics: PathBuf,
        /// Stored low-rank estimates (binary container).
        #[arg(long)]
        estimates: Option<PathBuf>,
        /// Ground-truth low-rank matrix (binary container).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

/// Flags shared by the experiment subcommands; each one overrides the
/// corresponding config value.
#[derive(Args)]
struct CommonArgs {
    /// TOML experiment config; defaults to a built-in profile.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in profile: desk, paper-mo, paper-bernoulli.
    #[arg(long, default_value = "desk")]
    profile: String,
    /// norst_auto | norst_known | norst_offline | mc.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    f: Option<f64>,
    #[arg(long)]
    alpha: Option<usize>,
    /// Refinement steps per epoch.
    #[arg(long = "K")]
    k_steps: Option<usize>,
    #[arg(long)]
    xmin: Option<f64>,
    /// bernoulli | moving_object (post-training support model).
    #[arg(long)]
    support_model: Option<String>,
    /// Bernoulli outlier rate (with --support-model bernoulli).
    #[arg(long)]
    rho_outlier: Option<f64>,
    /// Moving-object row fraction (with --support-model moving_object).
    #[arg(long)]
    b0: Option<f64>,
    #[arg(long)]
    parallel: bool,
}

impl CommonArgs {
    fn build(&self, default_mode: RunMode) -> Result<ExperimentConfig, NorstError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => match self.profile.as_str() {
                "desk" => ExperimentConfig::desk(default_mode),
                "paper-mo" => ExperimentConfig::paper_moving_object(default_mode),
                "paper-bernoulli" => ExperimentConfig::paper_bernoulli(default_mode),
                other => {
                    return Err(NorstError::Config(format!(
                        "unknown profile {other:?}; expected desk, paper-mo, or paper-bernoulli"
                    )))
                }
            },
        };
        if let Some(mode) = &self.mode {
            cfg.mode = RunMode::parse(mode)?;
        }
        if let Some(seed) = self.seed {
            cfg.base_seed = seed;
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        if let Some(n) = self.n {
            cfg.scenario.n = n;
        }
        if let Some(d) = self.d {
            cfg.scenario.d = d;
        }
        if let Some(r) = self.r {
            cfg.scenario.r = r;
        }
        if let Some(f) = self.f {
            cfg.scenario.f = f;
        }
        if let Some(alpha) = self.alpha {
            cfg.scenario.alpha = alpha;
            cfg.tracker.alpha = Some(alpha);
        }
        if let Some(k) = self.k_steps {
            cfg.tracker.k_steps = Some(k);
        }
        if let Some(x) = self.xmin {
            let spread = cfg.scenario.x_max - cfg.scenario.x_min;
            cfg.scenario.x_min = x;
            cfg.scenario.x_max = x + spread.max(0.0);
        }
        match self.support_model.as_deref() {
            Some("bernoulli") => {
                cfg.scenario.support_post = SupportModel::Bernoulli {
                    rho: self.rho_outlier.unwrap_or(0.05),
                };
            }
            Some("moving_object") => {
                let s = (cfg.scenario.n as f64 * 0.05).round() as usize;
                cfg.scenario.support_post = SupportModel::MovingObject {
                    s: s.max(1),
                    b0: self.b0.unwrap_or(0.3),
                };
            }
            Some(other) => {
                return Err(NorstError::Config(format!(
                    "unknown support model {other:?}"
                )))
            }
            None => {
                if let (Some(rho), SupportModel::Bernoulli { .. }) =
                    (self.rho_outlier, cfg.scenario.support_post)
                {
                    cfg.scenario.support_post = SupportModel::Bernoulli { rho };
                }
                if let (Some(b0), SupportModel::MovingObject { s, .. }) =
                    (self.b0, cfg.scenario.support_post)
                {
                    cfg.scenario.support_post = SupportModel::MovingObject { s, b0 };
                }
            }
        }
        if self.parallel {
            cfg.parallel = true;
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(error_category(&err))
        }
    }
}

/// Exit-code categories: 1 configuration, 2 i/o, 3 parse, 4 numerical.
fn error_category(err: &NorstError) -> u8 {
    match err {
        NorstError::Config(_) | NorstError::InvalidParameter { .. } => 1,
        NorstError::Io { .. } => 2,
        NorstError::Parse { .. } => 3,
        _ => 4,
    }
}

fn run(cli: Cli) -> Result<(), NorstError> {
    match cli.command {
        Command::Simulate {
            common,
            out_dir,
            mask_rho,
        } => {
            let cfg = common.build(RunMode::NorstAuto)?;
            cfg.scenario.validate()?;
            let scenario = gen_scenario(&cfg.scenario, cfg.base_seed)?;
            let bundle = ScenarioBundle::new(&out_dir);
            bundle.save(&scenario)?;
            if let Some(rho) = mask_rho {
                let masks = gen_support_stream(
                    cfg.scenario.n,
                    cfg.scenario.d,
                    SupportModel::Bernoulli { rho },
                    cfg.scenario.alpha,
                    cfg.base_seed ^ 0x4d41_534b,
                )?;
                norst::io::write_supports(&out_dir.join("masks.csv"), 0, &masks)?;
            }
            println!(
                "scenario saved to {} (n={}, d={}, r={}, changes at {:?}, realized motion {:?})",
                out_dir.display(),
                cfg.scenario.n,
                cfg.scenario.d,
                cfg.scenario.r,
                cfg.scenario.change_times,
                scenario
                    .change_magnitudes
                    .iter()
                    .map(|m| format!("{m:.4}"))
                    .collect::<Vec<_>>()
            );
            Ok(())
        }
        Command::Track {
            common,
            scenario,
            out_dir,
            masks,
        } => {
            let mut cfg = common.build(RunMode::NorstOffline)?;
            cfg.out_dir = out_dir.or(cfg.out_dir);
            match scenario {
                Some(dir) => {
                    let loaded = ScenarioBundle::new(&dir).load()?;
                    cfg.scenario = loaded.config.clone();
                    if cfg.mode == RunMode::Mc {
                        cfg.init = InitSpec::RandomOrthogonal;
                    }
                    let report = track_loaded(&cfg, &loaded, masks.as_deref())?;
                    print_report_line(&report);
                    if let Some(dir) = &cfg.out_dir {
                        std::fs::create_dir_all(dir)
                            .map_err(|e| NorstError::io(dir.display().to_string(), e))?;
                        norst::io::write_metrics_csv(
                            &dir.join(format!("metrics_seed{}.csv", report.seed)),
                            &report,
                        )?;
                    }
                    Ok(())
                }
                None => {
                    let summary = run_experiment(&cfg)?;
                    print_summary(&summary);
                    Ok(())
                }
            }
        }
        Command::Mc {
            common,
            rho,
            out_dir,
        } => {
            let mut cfg = common.build(RunMode::Mc)?;
            cfg.mode = RunMode::Mc;
            cfg.init = InitSpec::RandomOrthogonal;
            cfg.scenario.t_train = 0;
            // Missing-data runs are outlier-free unless configured otherwise.
            if cfg.mask.is_none() {
                cfg.mask = Some(SupportModel::Bernoulli { rho });
                cfg.scenario.support_train = SupportModel::Bernoulli { rho: 0.0 };
                cfg.scenario.support_post = SupportModel::Bernoulli { rho: 0.0 };
            }
            cfg.out_dir = out_dir.or(cfg.out_dir);
            let summary = run_experiment(&cfg)?;
            print_summary(&summary);
            Ok(())
        }
        Command::Phase {
            common,
            r_grid,
            b0_grid,
            threshold,
            out_dir,
        } => {
            let mut cfg = common.build(RunMode::NorstOffline)?;
            cfg.out_dir = out_dir.or(cfg.out_dir);
            let trials = cfg.trials;
            let cells = run_phase_transition(&cfg, &r_grid, &b0_grid, trials, threshold)?;
            println!("r,b0,success_rate");
            for c in &cells {
                println!("{},{:.3},{:.3}", c.r, c.b0, c.success_rate);
            }
            Ok(())
        }
        Command::Xmin {
            common,
            values,
            out_dir,
        } => {
            let mut cfg = common.build(RunMode::NorstAuto)?;
            cfg.out_dir = out_dir.or(cfg.out_dir);
            let points = run_xmin_sweep(&cfg, &values)?;
            println!("x_min,final_sin_theta");
            for p in &points {
                println!("{},{:.6e}", p.x_min, p.final_sin_theta);
            }
            Ok(())
        }
        Command::Report {
            metrics,
            estimates,
            truth,
        } => {
            let rows = read_metrics_csv(&metrics)?;
            println!("{}: {} rows, schema ok", metrics.display(), rows.len());
            if let (Some(est), Some(tru)) = (estimates, truth) {
                let l_hat = read_matrix(&est)?;
                let l = read_matrix(&tru)?;
                if l_hat.shape() != l.shape() {
                    return Err(NorstError::DimensionMismatch {
                        context: "report: estimates vs truth",
                        left: l_hat.ncols(),
                        right: l.ncols(),
                    });
                }
                let num = (&l_hat - &l).norm_squared();
                let den = l.norm_squared().max(f64::MIN_POSITIVE);
                println!("recomputed rel_frob_err = {:.6e}", (num / den).sqrt());
            }
            Ok(())
        }
    }
}

/// Tracks a loaded scenario bundle under the configured mode.
fn track_loaded(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    masks_path: Option<&std::path::Path>,
) -> Result<norst::metrics::MetricsReport, NorstError> {
    let params = cfg.resolved_params()?;
    let seed = cfg.base_seed;
    let t_train = scenario.config.t_train;
    let p_init = match cfg.init {
        InitSpec::AltprojLite => {
            let y_train = scenario.observations.columns(0, t_train).into_owned();
            let icfg = norst::init::InitConfig::new(t_train, scenario.config.r)
                .with_floor(scenario.config.x_min / 2.0);
            norst::init::init_altproj_lite(&y_train, &icfg)?
        }
        InitSpec::Oracle { target } => {
            norst::init::init_oracle(&scenario.subspaces[0], target, seed ^ 0x9e37_79b9)?
        }
        InitSpec::RandomOrthogonal => norst::init::init_random_orthogonal(
            scenario.config.n,
            scenario.config.r,
            seed ^ 0x524f_4d21,
        )?,
    };
    let mut tracker = match cfg.mode {
        RunMode::NorstKnown => Tracker::with_known_changes(
            p_init,
            params,
            t_train,
            scenario.config.change_times.clone(),
        )?,
        _ => Tracker::new(p_init, params, t_train)?,
    };
    let masks = match (cfg.mode, masks_path) {
        (RunMode::Mc, Some(path)) => Some(norst::io::read_supports(path)?),
        (RunMode::Mc, None) => {
            return Err(NorstError::Config(
                "mc replay of a saved scenario needs --masks".into(),
            ))
        }
        _ => None,
    };
    let started = std::time::Instant::now();
    let mut frames = Vec::new();
    for t in t_train..scenario.config.d {
        let y = scenario.y_col(t);
        let fe = match &masks {
            Some(masks) => {
                let frame = MaskedFrame::new(y, masks[t].1.clone())?;
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
        scenario,
        &frames,
        offline.as_deref(),
        tracker.detections(),
        seed,
        elapsed_ms,
    )
}

fn print_report_line(report: &norst::metrics::MetricsReport) {
    let offline = report
        .rel_frob_err_offline
        .map(|v| format!(", offline {v:.3e}"))
        .unwrap_or_default();
    println!(
        "seed {}: rel_frob_err {:.3e}{}, {:.3} ms/frame, detections {:?}, false {:?}",
        report.seed,
        report.rel_frob_err,
        offline,
        report.ms_per_frame,
        report
            .detections
            .iter()
            .map(|d| (d.t_true, d.t_hat))
            .collect::<Vec<_>>(),
        report.false_detections
    );
}

fn print_summary(summary: &norst::experiments::ExperimentSummary) {
    for report in &summary.reports {
        print_report_line(report);
    }
    println!(
        "trials {}: mean online {:.3e}, median online {:.3e}{}, false detections {}{}",
        summary.reports.len(),
        summary.mean_online_error(),
        summary.median_online_error(),
        summary
            .mean_offline_error()
            .map(|v| format!(", mean offline {v:.3e}"))
            .unwrap_or_default(),
        summary.total_false_detections(),
        if summary.failures.is_empty() {
            String::new()
        } else {
            format!(", {} failed trials", summary.failures.len())
        }
    );
}
