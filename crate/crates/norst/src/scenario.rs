//! Synthetic ground truth: piecewise-constant rotating subspaces, bounded
//! zero-mean coefficients with a prescribed condition number, two outlier
//! support models with magnitude control, and optional small dense noise.
//!
//! Generation is a pure function of (config, seed). Coefficients, supports,
//! magnitudes, rotations, and noise each draw from their own seeded
//! sub-stream, so changing one knob never perturbs the other draws.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NorstError, Result};
use crate::geometry::{rotate_subspace, sin_theta_max, Basis};
use crate::rng::{standard_normal, stream_rng, Stream};

/// Bounded zero-mean coefficient law with condition number `f`:
/// `(a_t)_i ~ unif[-q_i, q_i]` with `q_i = sqrt(f) - sqrt(f) (i-1) / (2r)`
/// for `i < r` and `q_r = 1`, so `lambda_i = q_i^2 / 3` and
/// `lambda^+ / lambda^- = f`. The uniform law is element-wise bounded with
/// `(a_t)_i^2 <= eta lambda_i`, `eta = 3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffModel {
    pub r: usize,
    pub f: f64,
    pub lambdas: Vec<f64>,
    pub eta: f64,
}

impl CoeffModel {
    pub fn uniform(r: usize, f: f64) -> Result<Self> {
        if r == 0 {
            return Err(NorstError::invalid("r", "must be >= 1"));
        }
        if f < 1.0 {
            return Err(NorstError::invalid("f", "condition number must be >= 1"));
        }
        let lambdas = (1..=r).map(|i| Self::bound(r, f, i).powi(2) / 3.0).collect();
        Ok(CoeffModel {
            r,
            f,
            lambdas,
            eta: 3.0,
        })
    }

    /// `q_i` for 1-based coordinate `i`.
    fn bound(r: usize, f: f64, i: usize) -> f64 {
        if i == r {
            1.0
        } else {
            f.sqrt() - f.sqrt() * (i as f64 - 1.0) / (2.0 * r as f64)
        }
    }

    pub fn q(&self, i: usize) -> f64 {
        Self::bound(self.r, self.f, i + 1)
    }

    pub fn lambda_plus(&self) -> f64 {
        self.lambdas.iter().cloned().fold(f64::MIN, f64::max)
    }

    pub fn lambda_minus(&self) -> f64 {
        self.lambdas.iter().cloned().fold(f64::MAX, f64::min)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_fn(self.r, |i, _| {
            let q = self.q(i);
            rng.gen_range(-q..=q)
        })
    }
}

/// Outlier support models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupportModel {
    /// Each (i, t) is an outlier independently with probability `rho`.
    Bernoulli { rho: f64 },
    /// A contiguous block of `s` indices, constant for
    /// `dwell = ceil(b0 * alpha)` frames, then shifted by `s` (wrapping):
    /// column fraction `s/n`, worst row fraction over an `alpha` window
    /// approximately `b0`.
    MovingObject { s: usize, b0: f64 },
}

impl SupportModel {
    fn validate(&self, n: usize) -> Result<()> {
        match *self {
            SupportModel::Bernoulli { rho } => {
                if !(0.0..=1.0).contains(&rho) {
                    return Err(NorstError::invalid("rho", "must be in [0, 1]"));
                }
            }
            SupportModel::MovingObject { s, b0 } => {
                if s > n {
                    return Err(NorstError::invalid(
                        "s",
                        format!("block size {s} exceeds n = {n}"),
                    ));
                }
                if !(0.0..=1.0).contains(&b0) {
                    return Err(NorstError::invalid("b0", "must be in [0, 1]"));
                }
            }
        }
        Ok(())
    }
}

/// How nonzero outlier magnitudes are drawn. Signs are always independent
/// random flips; constant mode degenerates the uniform interval to the
/// single point `x_min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeMode {
    /// `|x_i| ~ unif[x_min, x_max]`.
    Uniform,
    /// `|x_i| = x_min` exactly.
    Constant,
}

/// How the per-change rotation amount is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RotationSpec {
    /// Exponent scales applied verbatim, one per change.
    Raw { gammas: Vec<f64> },
    /// Calibrate each exponent so the realized subspace motion
    /// `sin theta_max(P_j, P_{j-1})` lands on the target (secant search).
    TargetSinTheta { target: f64 },
}

/// Optional small dense noise: entries `unif[-w, w]` so that
/// `||E[v v']|| = w^2 / 3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n: usize,
    /// Total frames.
    pub d: usize,
    pub r: usize,
    /// Coefficient condition number.
    pub f: f64,
    /// Frames `0..t_train` form the training block (milder outliers).
    pub t_train: usize,
    /// 0-based frame indices at which a new subspace takes over.
    pub change_times: Vec<usize>,
    pub rotation: RotationSpec,
    pub support_train: SupportModel,
    pub support_post: SupportModel,
    /// Window length used for the moving-object dwell `ceil(b0 * alpha)`.
    pub alpha: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub magnitude_mode: MagnitudeMode,
    pub noise: Option<NoiseModel>,
}

impl ScenarioConfig {
    /// Paper-scale recipe: n = 1000, d = 12000, r = 30, f = 50, changes at
    /// 3000 and 8000, moving-object outliers (s/n = 0.05, b0 = 0.3 after a
    /// mild training block), magnitudes unif[10, 20], motion 0.01.
    pub fn paper_moving_object() -> Self {
        ScenarioConfig {
            n: 1000,
            d: 12000,
            r: 30,
            f: 50.0,
            t_train: 100,
            change_times: vec![3000, 8000],
            rotation: RotationSpec::TargetSinTheta { target: 0.01 },
            support_train: SupportModel::MovingObject { s: 10, b0: 0.01 },
            support_post: SupportModel::MovingObject { s: 50, b0: 0.3 },
            alpha: 300,
            x_min: 10.0,
            x_max: 20.0,
            magnitude_mode: MagnitudeMode::Uniform,
            noise: None,
        }
    }

    /// Paper-scale Bernoulli variant: rho = 0.01 while training, 0.3 after.
    pub fn paper_bernoulli() -> Self {
        ScenarioConfig {
            support_train: SupportModel::Bernoulli { rho: 0.01 },
            support_post: SupportModel::Bernoulli { rho: 0.3 },
            ..Self::paper_moving_object()
        }
    }

    /// Desk-scale profile for fast iteration and CI: n = 200, d = 3000,
    /// r = 10, alpha = 100, changes at 1000 and 2000.
    pub fn desk_moving_object() -> Self {
        ScenarioConfig {
            n: 200,
            d: 3000,
            r: 10,
            f: 32.0,
            t_train: 100,
            change_times: vec![1000, 2000],
            rotation: RotationSpec::TargetSinTheta { target: 0.05 },
            support_train: SupportModel::MovingObject { s: 2, b0: 0.01 },
            support_post: SupportModel::MovingObject { s: 10, b0: 0.3 },
            alpha: 100,
            x_min: 20.0,
            x_max: 40.0,
            magnitude_mode: MagnitudeMode::Uniform,
            noise: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(NorstError::invalid("n/d", "must be positive"));
        }
        if self.r == 0 || self.r > self.n {
            return Err(NorstError::invalid("r", "need 1 <= r <= n"));
        }
        if self.t_train >= self.d {
            return Err(NorstError::invalid("t_train", "must be < d"));
        }
        if self.alpha == 0 {
            return Err(NorstError::invalid("alpha", "must be >= 1"));
        }
        if !(0.0 < self.x_min && self.x_min <= self.x_max) {
            return Err(NorstError::invalid("x_min/x_max", "need 0 < x_min <= x_max"));
        }
        let mut prev = self.t_train;
        for &t in &self.change_times {
            if t <= prev || t >= self.d {
                return Err(NorstError::invalid(
                    "change_times",
                    "must be strictly increasing within (t_train, d)",
                ));
            }
            prev = t;
        }
        if let RotationSpec::Raw { gammas } = &self.rotation {
            if gammas.len() != self.change_times.len() {
                return Err(NorstError::invalid(
                    "rotation",
                    "one gamma per change time required",
                ));
            }
        }
        if let RotationSpec::TargetSinTheta { target } = self.rotation {
            if !(0.0..1.0).contains(&target) {
                return Err(NorstError::invalid("rotation.target", "must be in [0, 1)"));
            }
        }
        self.support_train.validate(self.n)?;
        self.support_post.validate(self.n)?;
        if let Some(noise) = &self.noise {
            if noise.half_width < 0.0 {
                return Err(NorstError::invalid("noise", "half width must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn epochs(&self) -> usize {
        self.change_times.len() + 1
    }
}

/// Generated ground truth. `Y = L + X + V` holds exactly by construction;
/// the sparse part is stored as per-frame supports and values.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub seed: u64,
    /// `P_0 .. P_J`.
    pub subspaces: Vec<Basis>,
    /// Realized `sin theta_max(P_j, P_{j-1})` per change.
    pub change_magnitudes: Vec<f64>,
    pub observations: DMatrix<f64>,
    pub low_rank: DMatrix<f64>,
    pub noise: Option<DMatrix<f64>>,
    /// Outlier support per frame, ascending.
    pub supports: Vec<Vec<usize>>,
    /// Outlier values aligned with `supports`.
    pub outlier_values: Vec<Vec<f64>>,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn frames(&self) -> usize {
        self.config.d
    }

    /// Epoch index of frame `t` (0 until the first change time).
    pub fn epoch_at(&self, t: usize) -> usize {
        self.config
            .change_times
            .iter()
            .take_while(|&&c| t >= c)
            .count()
    }

    /// True subspace at frame `t`.
    pub fn subspace_at(&self, t: usize) -> &Basis {
        &self.subspaces[self.epoch_at(t)]
    }

    pub fn y_col(&self, t: usize) -> DVector<f64> {
        self.observations.column(t).into_owned()
    }

    pub fn l_col(&self, t: usize) -> DVector<f64> {
        self.low_rank.column(t).into_owned()
    }

    /// Dense sparse-outlier column, reconstructed from the support store.
    pub fn x_col(&self, t: usize) -> DVector<f64> {
        let mut x = DVector::zeros(self.n());
        for (&i, &v) in self.supports[t].iter().zip(&self.outlier_values[t]) {
            x[i] = v;
        }
        x
    }
}

/// Exact sliding-window maximum row outlier fraction:
/// `max over alpha-windows of max_i (outliers in row i) / alpha`.
pub fn max_outlier_frac_row(supports: &[Vec<usize>], alpha: usize) -> f64 {
    let d = supports.len();
    if d == 0 || alpha == 0 || alpha > d {
        return 0.0;
    }
    let n = supports
        .iter()
        .flat_map(|s| s.iter().copied())
        .max()
        .map_or(0, |m| m + 1);
    if n == 0 {
        return 0.0;
    }
    let mut counts = vec![0u32; n];
    for s in &supports[..alpha] {
        for &i in s {
            counts[i] += 1;
        }
    }
    let mut best = counts.iter().copied().max().unwrap_or(0);
    for t in alpha..d {
        for &i in &supports[t - alpha] {
            counts[i] -= 1;
        }
        for &i in &supports[t] {
            counts[i] += 1;
        }
        let m = counts.iter().copied().max().unwrap_or(0);
        best = best.max(m);
    }
    best as f64 / alpha as f64
}

/// `max_t |T_t| / n`.
pub fn max_outlier_frac_col(supports: &[Vec<usize>], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    supports
        .iter()
        .map(|s| s.len() as f64 / n as f64)
        .fold(0.0, f64::max)
}

/// Outlier values for one frame's support: magnitudes from the interval
/// (collapsed to the point `x_min` in constant mode), each with an
/// independent random sign. An all-positive moving block would be a
/// rank-one structure capable of displacing the weakest subspace
/// directions regardless of magnitude, which is not what the support
/// models intend.
pub fn gen_magnitudes(
    support: &[usize],
    x_min: f64,
    x_max: f64,
    mode: MagnitudeMode,
    rng: &mut impl Rng,
) -> Vec<f64> {
    support
        .iter()
        .map(|_| {
            let mag = match mode {
                MagnitudeMode::Constant => x_min,
                MagnitudeMode::Uniform => rng.gen_range(x_min..=x_max),
            };
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

struct MovingObjectWalk {
    s: usize,
    dwell: usize,
    frames_in_dwell: usize,
    start: usize,
}

impl MovingObjectWalk {
    fn new(s: usize, b0: f64, alpha: usize) -> Self {
        MovingObjectWalk {
            s,
            dwell: (b0 * alpha as f64).ceil() as usize,
            frames_in_dwell: 0,
            start: 0,
        }
    }

    fn next_support(&mut self, n: usize) -> Vec<usize> {
        if self.s == 0 || self.dwell == 0 {
            return Vec::new();
        }
        if self.frames_in_dwell == self.dwell {
            self.frames_in_dwell = 0;
            self.start = (self.start + self.s) % n;
        }
        self.frames_in_dwell += 1;
        let mut sup: Vec<usize> = (0..self.s).map(|k| (self.start + k) % n).collect();
        sup.sort_unstable();
        sup
    }
}

enum SupportGen {
    Bernoulli { rho: f64 },
    Moving(MovingObjectWalk),
}

impl SupportGen {
    fn new(model: SupportModel, alpha: usize) -> Self {
        match model {
            SupportModel::Bernoulli { rho } => SupportGen::Bernoulli { rho },
            SupportModel::MovingObject { s, b0 } => {
                SupportGen::Moving(MovingObjectWalk::new(s, b0, alpha))
            }
        }
    }

    fn next_support(&mut self, n: usize, rng: &mut impl Rng) -> Vec<usize> {
        match self {
            SupportGen::Bernoulli { rho } => {
                (0..n).filter(|_| rng.gen_bool(*rho)).collect()
            }
            SupportGen::Moving(walk) => walk.next_support(n),
        }
    }
}

/// Standalone support stream from a support model; used for missing-data
/// masks and tests. Independent of any scenario's own support draws.
pub fn gen_support_stream(
    n: usize,
    d: usize,
    model: SupportModel,
    alpha: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    model.validate(n)?;
    let mut rng = stream_rng(seed, Stream::Supports);
    let mut gen = SupportGen::new(model, alpha);
    Ok((0..d).map(|_| gen.next_support(n, &mut rng)).collect())
}

/// Builds the full scenario: subspace sequence, coefficients, supports,
/// magnitudes, optional noise, and the observation matrix `Y = L + X + V`.
/// Deterministic in `(config, seed)`.
pub fn gen_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let n = config.n;
    let d = config.d;

    // Subspace sequence P_0 .. P_J.
    let mut rot_rng = stream_rng(seed, Stream::Rotations);
    let p0 = {
        let mut init_rng = stream_rng(seed, Stream::InitialBasis);
        let g = DMatrix::from_fn(n, config.r, |_, _| standard_normal(&mut init_rng));
        crate::geometry::orthonormalize(&g)?
    };
    let mut subspaces = vec![p0];
    let mut change_magnitudes = Vec::new();
    for j in 0..config.change_times.len() {
        let raw = DMatrix::from_fn(n, n, |_, _| standard_normal(&mut rot_rng));
        let skew = &raw - raw.transpose();
        let prev = subspaces.last().expect("nonempty");
        let (next, realized) = match &config.rotation {
            RotationSpec::Raw { gammas } => {
                let next = rotate_subspace(prev, &skew, gammas[j])?;
                let realized = sin_theta_max(&next, prev)?;
                (next, realized)
            }
            RotationSpec::TargetSinTheta { target } => {
                calibrate_rotation(prev, &skew, *target)?
            }
        };
        change_magnitudes.push(realized);
        subspaces.push(next);
    }

    // Supports and magnitudes.
    let mut supp_rng = stream_rng(seed, Stream::Supports);
    let mut mag_rng = stream_rng(seed, Stream::Magnitudes);
    let mut train_gen = SupportGen::new(config.support_train, config.alpha);
    let mut post_gen = SupportGen::new(config.support_post, config.alpha);
    let mut supports = Vec::with_capacity(d);
    let mut outlier_values = Vec::with_capacity(d);
    for t in 0..d {
        let sup = if t < config.t_train {
            train_gen.next_support(n, &mut supp_rng)
        } else {
            post_gen.next_support(n, &mut supp_rng)
        };
        let vals = gen_magnitudes(
            &sup,
            config.x_min,
            config.x_max,
            config.magnitude_mode,
            &mut mag_rng,
        );
        supports.push(sup);
        outlier_values.push(vals);
    }

    // Low-rank part and observations.
    let coeff_model = CoeffModel::uniform(config.r, config.f)?;
    let mut coeff_rng = stream_rng(seed, Stream::Coefficients);
    let mut low_rank = DMatrix::zeros(n, d);
    let mut epoch = 0usize;
    for t in 0..d {
        while epoch < config.change_times.len() && t >= config.change_times[epoch] {
            epoch += 1;
        }
        let a = coeff_model.sample(&mut coeff_rng);
        let col = subspaces[epoch].cols() * a;
        low_rank.set_column(t, &col);
    }

    let noise = config.noise.and_then(|nm| {
        if nm.half_width == 0.0 {
            return None;
        }
        let mut noise_rng = stream_rng(seed, Stream::Noise);
        Some(DMatrix::from_fn(n, d, |_, _| {
            noise_rng.gen_range(-nm.half_width..=nm.half_width)
        }))
    });

    let mut observations = low_rank.clone();
    for t in 0..d {
        for (&i, &v) in supports[t].iter().zip(&outlier_values[t]) {
            observations[(i, t)] += v;
        }
    }
    if let Some(v) = &noise {
        observations += v;
    }

    let scenario = Scenario {
        config: config.clone(),
        seed,
        subspaces,
        change_magnitudes,
        observations,
        low_rank,
        noise,
        supports,
        outlier_values,
    };
    check_budgets(&scenario)?;
    Ok(scenario)
}

/// Generation-time budget checks for the deterministic support model: the
/// column fraction must equal s/n exactly and the post-train row fraction
/// must realize b0 (up to window-quantization) whenever the stream is long
/// enough to contain a full dwell.
fn check_budgets(sc: &Scenario) -> Result<()> {
    let cfg = &sc.config;
    if let SupportModel::MovingObject { s, b0 } = cfg.support_post {
        if s == 0 || b0 == 0.0 {
            return Ok(());
        }
        let post = &sc.supports[cfg.t_train..];
        let col = max_outlier_frac_col(post, cfg.n);
        let expected_col = s as f64 / cfg.n as f64;
        if (col - expected_col).abs() > 1e-12 {
            return Err(NorstError::Config(format!(
                "moving-object column fraction {col} != s/n = {expected_col}"
            )));
        }
        let dwell = (b0 * cfg.alpha as f64).ceil() as usize;
        let cycle = cfg.n.div_ceil(s) * dwell;
        if post.len() >= cycle + cfg.alpha && cfg.alpha <= post.len() {
            let row = max_outlier_frac_row(post, cfg.alpha);
            let expected_row = dwell as f64 / cfg.alpha as f64;
            let slack = 2.0 / cfg.alpha as f64 + 1e-12;
            if (row - expected_row).abs() > slack {
                return Err(NorstError::Config(format!(
                    "moving-object row fraction {row} missed target {expected_row}"
                )));
            }
        }
    }
    Ok(())
}

/// Finds the exponent scale whose realized motion hits `target` (secant
/// iteration on the nearly linear small-angle map), then applies it.
fn calibrate_rotation(
    prev: &Basis,
    skew: &DMatrix<f64>,
    target: f64,
) -> Result<(Basis, f64)> {
    if target == 0.0 {
        return Ok((prev.clone(), 0.0));
    }
    let mut gamma = 1e-3;
    let mut rotated = rotate_subspace(prev, skew, gamma)?;
    let mut realized = sin_theta_max(&rotated, prev)?;
    for _ in 0..12 {
        if (realized - target).abs() <= 0.02 * target {
            return Ok((rotated, realized));
        }
        if realized <= f64::EPSILON {
            gamma *= 8.0;
        } else {
            gamma *= target / realized;
        }
        rotated = rotate_subspace(prev, skew, gamma)?;
        realized = sin_theta_max(&rotated, prev)?;
    }
    if (realized - target).abs() <= 0.10 * target {
        return Ok((rotated, realized));
    }
    Err(NorstError::Config(format!(
        "rotation calibration stalled at {realized} (target {target})"
    )))
}
