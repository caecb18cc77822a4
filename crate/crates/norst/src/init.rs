//! Initial subspace estimation from the training block, plus oracle and
//! random initializers for testing and the missing-data variant.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NorstError, Result};
use crate::geometry::{top_r_left_singular_vectors, Basis};
use crate::rng::standard_normal;

/// Configuration for [`init_altproj_lite`].
#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    pub t_train: usize,
    pub r: usize,
    /// Alternation rounds. Default `ceil(log2 r) + 4`.
    pub iters: usize,
    /// Geometric decay of the hard threshold per round.
    pub thresh_decay: f64,
    /// Threshold floor; tie to `x_min / 2` when the outlier scale is known.
    pub thresh_floor: Option<f64>,
}

impl InitConfig {
    pub fn new(t_train: usize, r: usize) -> Self {
        let iters = (r.max(2) as f64).log2().ceil() as usize + 4;
        InitConfig {
            t_train,
            r,
            iters,
            thresh_decay: 0.7,
            thresh_floor: None,
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.thresh_floor = Some(floor);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.t_train < self.r {
            return Err(NorstError::invalid(
                "t_train",
                format!("need at least r = {} training frames", self.r),
            ));
        }
        if self.iters == 0 {
            return Err(NorstError::invalid("iters", "must be >= 1"));
        }
        if !(0.0 < self.thresh_decay && self.thresh_decay < 1.0) {
            return Err(NorstError::invalid("thresh_decay", "must be in (0, 1)"));
        }
        Ok(())
    }
}

/// Alternating hard-threshold / truncated-SVD initializer.
///
/// Each round hard-thresholds the residual `Y - L_hat` at a geometrically
/// decaying level to peel off outliers, then refits `L_hat` as the rank-`r`
/// projection of what remains. Returns the top-`r` left singular vectors
/// after the final round.
pub fn init_altproj_lite(y_train: &DMatrix<f64>, cfg: &InitConfig) -> Result<Basis> {
    cfg.validate()?;
    let (n, t) = y_train.shape();
    if cfg.r > n.min(t) {
        return Err(NorstError::DimensionMismatch {
            context: "init_altproj_lite: rank exceeds training block",
            left: cfg.r,
            right: n.min(t),
        });
    }

    // Threshold level: the decaying sweep from the largest magnitude runs
    // to completion before any SVD. A rank-r fit that sees the dominant
    // spikes absorbs them permanently (the residual at an absorbed spike is
    // near zero, so no later threshold can reclaim it), so all alternation
    // rounds work at the sweep's terminal level. The robust scale estimate
    // keeps the level above the data bulk even when the caller's floor is
    // tiny (an outlier threshold below the data median would claim the
    // whole block).
    let robust_floor = 10.0 * median_abs(y_train);
    let floor = cfg.thresh_floor.unwrap_or(0.0).max(robust_floor);
    let mut level = y_train.amax();
    for _ in 0..cfg.iters {
        level *= cfg.thresh_decay;
    }
    let level = level.max(floor);

    let mut l_hat = DMatrix::zeros(n, t);
    let mut basis: Option<Basis> = None;
    for _ in 0..cfg.iters {
        // Entries whose residual exceeds the level are claimed by the sparse
        // part; the observation there is replaced by the low-rank belief.
        // Claims are re-derived each round, so a data entry claimed early is
        // re-admitted once the fit catches up.
        let mut cleaned = y_train.clone();
        for (c, mut col) in cleaned.column_iter_mut().enumerate() {
            for i in 0..n {
                let resid: f64 = col[i] - l_hat[(i, c)];
                if resid.abs() > level {
                    col[i] = l_hat[(i, c)];
                }
            }
        }
        let top = top_r_left_singular_vectors(&cleaned, cfg.r)?;
        let sigma_r = top.singular_values[cfg.r - 1];
        let sigma_1 = top.singular_values[0];
        if sigma_r <= 1e-12 * sigma_1.max(f64::MIN_POSITIVE) {
            return Err(NorstError::RankDeficient {
                rank: top
                    .singular_values
                    .iter()
                    .filter(|s| **s > 1e-12 * sigma_1)
                    .count(),
                expected: cfg.r,
                tol: 1e-12,
            });
        }
        l_hat = top.basis.cols() * (top.basis.cols().tr_mul(&cleaned));
        basis = Some(top.basis);
    }
    Ok(basis.expect("iters >= 1"))
}

fn median_abs(m: &DMatrix<f64>) -> f64 {
    let mut v: Vec<f64> = m.iter().map(|x| x.abs()).collect();
    if v.is_empty() {
        return 0.0;
    }
    let mid = v.len() / 2;
    v.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).expect("finite"));
    v[mid]
}

/// Test-fixture initializer: a basis at a prescribed principal-angle
/// distance from `p_true`, built by rotating one direction toward the
/// orthogonal complement. The realized distance equals the target up to
/// floating rounding.
pub fn init_oracle(p_true: &Basis, target_sin_theta: f64, seed: u64) -> Result<Basis> {
    if !(0.0..1.0).contains(&target_sin_theta) {
        return Err(NorstError::invalid(
            "target_sin_theta",
            "must be in [0, 1)",
        ));
    }
    if target_sin_theta == 0.0 {
        return Ok(p_true.clone());
    }
    let n = p_true.ambient_dim();
    let r = p_true.dim();
    if r >= n {
        return Err(NorstError::invalid(
            "p_true",
            "full-dimensional subspace cannot be perturbed",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Random direction in the orthogonal complement.
    let mut w = DVector::from_fn(n, |_, _| standard_normal(&mut rng));
    w = p_true.project_out(&w);
    let norm = w.norm();
    if norm < 1e-12 {
        return Err(NorstError::invalid("seed", "degenerate complement draw"));
    }
    w /= norm;

    let cos = (1.0 - target_sin_theta * target_sin_theta).sqrt();
    let mut cols = p_true.cols().clone();
    let rotated = cols.column(0) * cos + &w * target_sin_theta;
    cols.set_column(0, &rotated);
    Basis::from_orthonormal(cols)
}

/// Haar-distributed orthonormal columns: QR of a standard Gaussian matrix
/// with the usual sign correction.
pub fn init_random_orthogonal(n: usize, r: usize, seed: u64) -> Result<Basis> {
    if r > n {
        return Err(NorstError::DimensionMismatch {
            context: "init_random_orthogonal: r vs n",
            left: r,
            right: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, r, |_, _| standard_normal(&mut rng));
    let qr = g.qr();
    let mut q = qr.q().columns(0, r).into_owned();
    let rm = qr.r();
    for j in 0..r {
        if rm[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Basis::from_orthonormal(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{orthonormalize, sin_theta_max};
    use rand::Rng;

    fn random_basis(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Basis {
        let m = DMatrix::from_fn(n, r, |_, _| rng.gen_range(-1.0..1.0));
        orthonormalize(&m).unwrap()
    }

    #[test]
    fn altproj_clean_data_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_basis(&mut rng, 60, 4);
        let coeffs = DMatrix::from_fn(4, 50, |_, _| rng.gen_range(-2.0..2.0));
        let y = p.cols() * coeffs;
        let cfg = InitConfig::new(50, 4);
        let b = init_altproj_lite(&y, &cfg).unwrap();
        assert!(sin_theta_max(&b, &p).unwrap() <= 1e-8);
    }

    #[test]
    fn altproj_recovers_through_sparse_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 80;
        let t = 100;
        let r = 5;
        let p = random_basis(&mut rng, n, r);
        let coeffs = DMatrix::from_fn(r, t, |_, _| rng.gen_range(-2.0..2.0));
        let mut y = p.cols() * coeffs;
        // 1% of entries corrupted with magnitude >= 10.
        for _ in 0..(n * t / 100) {
            let i = rng.gen_range(0..n);
            let c = rng.gen_range(0..t);
            y[(i, c)] += if rng.gen_bool(0.5) { 12.0 } else { -12.0 };
        }
        let cfg = InitConfig::new(t, r).with_floor(5.0);
        let b = init_altproj_lite(&y, &cfg).unwrap();
        let err = sin_theta_max(&b, &p).unwrap();
        assert!(err <= 0.02, "init error {err}");
    }

    #[test]
    fn altproj_more_iters_no_worse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 60;
        let t = 80;
        let r = 4;
        let p = random_basis(&mut rng, n, r);
        let coeffs = DMatrix::from_fn(r, t, |_, _| rng.gen_range(-2.0..2.0));
        let mut y = p.cols() * coeffs;
        for _ in 0..40 {
            let i = rng.gen_range(0..n);
            let c = rng.gen_range(0..t);
            y[(i, c)] += 11.0;
        }
        let base = InitConfig::new(t, r).with_floor(5.0);
        let mut doubled = base.clone();
        doubled.iters *= 2;
        let e1 = sin_theta_max(&init_altproj_lite(&y, &base).unwrap(), &p).unwrap();
        let e2 = sin_theta_max(&init_altproj_lite(&y, &doubled).unwrap(), &p).unwrap();
        assert!(e2 <= e1 + 1e-9, "doubling iters worsened {e1} -> {e2}");
    }

    #[test]
    fn altproj_rank_collapse_errors() {
        let y = DMatrix::zeros(20, 30);
        let cfg = InitConfig::new(30, 3);
        assert!(matches!(
            init_altproj_lite(&y, &cfg),
            Err(NorstError::RankDeficient { .. })
        ));
    }

    #[test]
    fn oracle_target_zero_returns_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_basis(&mut rng, 30, 3);
        let b = init_oracle(&p, 0.0, 7).unwrap();
        assert!(sin_theta_max(&b, &p).unwrap() <= 1e-12);
    }

    #[test]
    fn oracle_hits_target_within_ten_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_basis(&mut rng, 40, 5);
        for seed in 0..5u64 {
            let b = init_oracle(&p, 0.25, seed).unwrap();
            let got = sin_theta_max(&b, &p).unwrap();
            assert!((0.225..=0.275).contains(&got), "seed {seed}: {got}");
        }
    }

    #[test]
    fn random_orthogonal_is_orthonormal_and_incoherent() {
        let mut worst_c = 0.0f64;
        for seed in 0..100u64 {
            let b = init_random_orthogonal(1000, 30, seed).unwrap();
            let gram = b.cols().tr_mul(b.cols());
            assert!((gram - DMatrix::identity(30, 30)).amax() <= 1e-10);
            let r_bar = 30.0f64.max((1000.0f64).ln());
            let c = b.max_row_norm_sq() * 1000.0 / r_bar;
            worst_c = worst_c.max(c);
        }
        // Empirically calibrated constant for max_i ||I_i' P||^2 <= C rbar/n.
        println!("measured coherence constant C = {worst_c:.3}");
        assert!(worst_c <= 3.0, "coherence constant {worst_c}");
    }

    #[test]
    fn random_orthogonal_seeds_differ() {
        let a = init_random_orthogonal(100, 2, 1).unwrap();
        let b = init_random_orthogonal(100, 2, 2).unwrap();
        assert!(sin_theta_max(&a, &b).unwrap() > 0.5);
    }
}
