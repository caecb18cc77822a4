//! Projected sparse recovery: l1-regularized estimation of the outlier
//! vector from observations projected onto a subspace's orthogonal
//! complement, thresholding-based support estimation, and least-squares
//! debiasing on the estimated support.
//!
//! The projector `Psi = I - P P'` is never materialized; every application
//! is `v - P (P' v)`, O(nr).

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{NorstError, Result};
use crate::geometry::Basis;

/// Relative-change stopping tolerance for the shrinkage solver.
pub const DEFAULT_L1_TOL: f64 = 1e-4;
/// Conjugate-gradient tolerance for the debiasing step.
pub const DEFAULT_CG_TOL: f64 = 1e-10;
/// Conjugate-gradient iteration count for the debiasing step.
pub const DEFAULT_CG_ITERS: usize = 10;

/// An observation projected onto the orthogonal complement of the current
/// subspace estimate: `y_tilde = Psi y` with `Psi = I - P P'`.
#[derive(Debug, Clone)]
pub struct ProjectedObservation {
    y_tilde: DVector<f64>,
    projector_basis: Arc<Basis>,
}

impl ProjectedObservation {
    /// Projects `y` against `basis`.
    pub fn new(y: &DVector<f64>, basis: Arc<Basis>) -> Result<Self> {
        if y.len() != basis.ambient_dim() {
            return Err(NorstError::DimensionMismatch {
                context: "projected observation: y vs basis ambient",
                left: y.len(),
                right: basis.ambient_dim(),
            });
        }
        let y_tilde = basis.project_out(y);
        Ok(ProjectedObservation {
            y_tilde,
            projector_basis: basis,
        })
    }

    /// Wraps an already-projected vector, checking that it lies in the
    /// orthogonal complement: `||P' y_tilde|| <= 1e-8 ||y_tilde||`.
    pub fn from_projected(y_tilde: DVector<f64>, basis: Arc<Basis>) -> Result<Self> {
        if y_tilde.len() != basis.ambient_dim() {
            return Err(NorstError::DimensionMismatch {
                context: "projected observation: y_tilde vs basis ambient",
                left: y_tilde.len(),
                right: basis.ambient_dim(),
            });
        }
        let leak = if basis.is_empty() {
            0.0
        } else {
            basis.cols().tr_mul(&y_tilde).norm()
        };
        if leak > 1e-8 * y_tilde.norm() {
            return Err(NorstError::invalid(
                "y_tilde",
                format!("not in the orthogonal complement: leak {leak:e}"),
            ));
        }
        Ok(ProjectedObservation {
            y_tilde,
            projector_basis: basis,
        })
    }

    pub fn y_tilde(&self) -> &DVector<f64> {
        &self.y_tilde
    }

    pub fn basis(&self) -> &Basis {
        &self.projector_basis
    }

    /// `Psi v`.
    pub fn apply_projector(&self, v: &DVector<f64>) -> DVector<f64> {
        self.projector_basis.project_out(v)
    }

    fn n(&self) -> usize {
        self.y_tilde.len()
    }
}

/// Output of the projected sparse-recovery step for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseEstimate {
    /// Raw l1 solution before support thresholding.
    pub x_cs: DVector<f64>,
    /// Estimated outlier support, ascending.
    pub support: Vec<usize>,
    /// Debiased outlier estimate; zero off `support`.
    pub x_hat: DVector<f64>,
    /// Low-rank part: `y - x_hat`.
    pub l_hat: DVector<f64>,
    /// Shrinkage iterations spent (instrumentation; zero for the
    /// known-support path).
    pub shrink_iters: usize,
}

/// Solution of one Lagrangian sub-problem together with solver state that a
/// caller may reuse as a warm start.
#[derive(Debug, Clone)]
pub struct L1Solution {
    pub x: DVector<f64>,
    /// Multiplier that met the residual target.
    pub lambda: f64,
    pub residual: f64,
    pub shrink_iters: usize,
}

/// Noisy l1 minimization: `min ||x||_1 s.t. ||y_tilde - Psi x|| <= xi`,
/// solved through its Lagrangian with the multiplier picked by bisection.
pub fn l1_min_noisy(obs: &ProjectedObservation, xi: f64, tol: f64) -> Result<DVector<f64>> {
    Ok(l1_min_noisy_hinted(obs, xi, tol, None)?.x)
}

/// [`l1_min_noisy`] with an optional warm-start multiplier from a previous,
/// similar instance. The hint only changes where the bisection begins, not
/// what it accepts, so outputs stay deterministic in (inputs, hint).
pub fn l1_min_noisy_hinted(
    obs: &ProjectedObservation,
    xi: f64,
    tol: f64,
    lambda_hint: Option<f64>,
) -> Result<L1Solution> {
    if xi < 0.0 {
        return Err(NorstError::invalid("xi", "noise bound must be >= 0"));
    }
    if tol <= 0.0 {
        return Err(NorstError::invalid("tol", "tolerance must be > 0"));
    }
    let n = obs.n();
    let y = &obs.y_tilde;
    let y_norm = y.norm();
    if y_norm <= xi || y_norm == 0.0 {
        // Zero is feasible and has minimal norm.
        return Ok(L1Solution {
            x: DVector::zeros(n),
            lambda: y.amax().max(f64::MIN_POSITIVE),
            residual: y_norm,
            shrink_iters: 0,
        });
    }

    // At lambda >= ||Psi' y||_inf the Lagrangian optimum is x = 0, which we
    // already know is infeasible here; bisect below it.
    let lambda_max = y.amax();
    let mut lo = lambda_max * 1e-9;
    let mut hi = lambda_max;
    let budget = (10.0 * n as f64 * (1.0 / tol).ln()).ceil() as usize;
    let mut spent = 0usize;

    let mut x = DVector::zeros(n);
    let mut best: Option<(f64, DVector<f64>, f64)> = None; // (lambda, x, residual)
    let slack = 1.05;

    let mut lambda = match lambda_hint {
        Some(h) if h > lo && h < hi => h,
        _ => (lo * hi).sqrt(),
    };
    for _round in 0..40 {
        let iters = fista(obs, lambda, tol, budget.saturating_sub(spent), &mut x);
        spent += iters;
        let residual = (y - obs.apply_projector(&x)).norm();
        if residual <= xi * slack {
            // Feasible: remember it, push lambda up toward the boundary.
            let better = match &best {
                Some((l, _, _)) => lambda > *l,
                None => true,
            };
            if better {
                best = Some((lambda, x.clone(), residual));
            }
            if residual >= xi * 0.90 {
                break; // at the constraint boundary
            }
            lo = lambda;
        } else {
            hi = lambda;
        }
        if hi / lo < 1.02 || spent >= budget {
            break;
        }
        lambda = (lo * hi).sqrt();
    }

    match best {
        Some((lambda, x, residual)) => Ok(L1Solution {
            x,
            lambda,
            residual,
            shrink_iters: spent,
        }),
        None => {
            let residual = (y - obs.apply_projector(&x)).norm();
            Err(NorstError::L1NoConvergence {
                iters: spent,
                residual,
                target: xi,
                last_iterate: x.as_slice().to_vec().into_boxed_slice(),
            })
        }
    }
}

/// FISTA on `0.5 ||y_tilde - Psi x||^2 + lambda ||x||_1`, warm-started from
/// `x`. `Psi` is an orthogonal projector, so the gradient step size is 1 and
/// the gradient costs one projector application. Returns iterations used.
fn fista(
    obs: &ProjectedObservation,
    lambda: f64,
    tol: f64,
    max_iters: usize,
    x: &mut DVector<f64>,
) -> usize {
    let y = &obs.y_tilde;
    let mut z = x.clone();
    let mut theta = 1.0f64;
    for iter in 0..max_iters {
        // grad f(z) = Psi z - y_tilde (Psi idempotent, y_tilde in range(Psi)).
        let grad = obs.apply_projector(&z) - y;
        let mut x_new = &z - grad;
        soft_threshold(&mut x_new, lambda);

        let dx = (&x_new - &*x).norm();
        let scale = x_new.norm().max(1.0);

        // Momentum restart when the extrapolation opposes the actual step.
        if (&z - &x_new).dot(&(&x_new - &*x)) > 0.0 {
            theta = 1.0;
            z = x_new.clone();
        } else {
            let theta_new = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let beta = (theta - 1.0) / theta_new;
            z = &x_new + (&x_new - &*x) * beta;
            theta = theta_new;
        }
        *x = x_new;

        if dx <= tol * scale {
            return iter + 1;
        }
    }
    max_iters
}

fn soft_threshold(v: &mut DVector<f64>, t: f64) {
    for e in v.iter_mut() {
        *e = e.signum() * (e.abs() - t).max(0.0);
    }
}

/// Indices with `|x_i| > omega_supp`, strict, ascending.
pub fn threshold_support(x_cs: &DVector<f64>, omega_supp: f64) -> Vec<usize> {
    x_cs.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > omega_supp)
        .map(|(i, _)| i)
        .collect()
}

/// Least-squares debiasing restricted to `support`: solves the normal
/// equations `(Psi_T' Psi_T) x_T = Psi_T' y_tilde` by conjugate gradient and
/// embeds the solution into R^n (zero off support).
pub fn ls_debias(
    obs: &ProjectedObservation,
    support: &[usize],
    cg_tol: f64,
    cg_iters: usize,
) -> Result<DVector<f64>> {
    let n = obs.n();
    if cg_tol <= 0.0 {
        return Err(NorstError::invalid("cg_tol", "must be > 0"));
    }
    if cg_iters == 0 {
        return Err(NorstError::invalid("cg_iters", "must be >= 1"));
    }
    if support.is_empty() {
        return Ok(DVector::zeros(n));
    }
    if let Some(&max) = support.iter().max() {
        if max >= n {
            return Err(NorstError::invalid(
                "support",
                format!("index {max} out of range for dimension {n}"),
            ));
        }
    }
    let r = obs.basis().dim();
    if support.len() + r > n {
        // Psi has rank n - r; more columns than that cannot be independent.
        return Err(NorstError::SingularSupportSystem { curvature: 0.0 });
    }
    // Gram diagonal: A_ii = ||Psi e_i||^2 = 1 - ||I_i' P||^2. A vanishing
    // entry means the support direction lies inside the subspace; the CG
    // curvature check below cannot see it when the right-hand side is zero.
    for &idx in support {
        let diag = 1.0 - obs.basis().cols().row(idx).norm_squared();
        if diag <= 1e-12 {
            return Err(NorstError::SingularSupportSystem { curvature: diag });
        }
    }

    let k = support.len();
    // A v = I_T' Psi I_T v (SPD, eigenvalues in [1 - delta, 1]).
    let apply = |v: &DVector<f64>| -> DVector<f64> {
        let mut full = DVector::zeros(n);
        for (i, &idx) in support.iter().enumerate() {
            full[idx] = v[i];
        }
        let projected = obs.apply_projector(&full);
        DVector::from_fn(k, |i, _| projected[support[i]])
    };
    let b = DVector::from_fn(k, |i, _| obs.y_tilde[support[i]]);

    let mut x_t: DVector<f64> = DVector::zeros(k);
    let mut residual = b.clone();
    let mut p = residual.clone();
    let mut rs = residual.norm_squared();
    let b_norm = b.norm().max(f64::MIN_POSITIVE);
    for _ in 0..cg_iters {
        if rs.sqrt() <= cg_tol * b_norm {
            break;
        }
        let ap = apply(&p);
        let curvature = p.dot(&ap);
        if curvature <= 1e-12 * p.norm_squared() {
            return Err(NorstError::SingularSupportSystem { curvature });
        }
        let alpha = rs / curvature;
        x_t += &p * alpha;
        residual -= ap * alpha;
        let rs_new = residual.norm_squared();
        p = &residual + &p * (rs_new / rs);
        rs = rs_new;
    }

    let mut x = DVector::zeros(n);
    for (i, &idx) in support.iter().enumerate() {
        x[idx] = x_t[i];
    }
    Ok(x)
}

/// The full projected-CS step for one frame: project, recover the sparse
/// part by l1 minimization, threshold to get the support, debias by least
/// squares, and split the frame as `y = x_hat + l_hat`.
pub fn projected_cs_step(
    y_t: &DVector<f64>,
    p_hat: Arc<Basis>,
    xi: f64,
    omega_supp: f64,
) -> Result<SparseEstimate> {
    Ok(projected_cs_step_hinted(y_t, p_hat, xi, omega_supp, None)?.0)
}

/// [`projected_cs_step`] returning the accepted multiplier for reuse as the
/// next frame's warm start.
pub fn projected_cs_step_hinted(
    y_t: &DVector<f64>,
    p_hat: Arc<Basis>,
    xi: f64,
    omega_supp: f64,
    lambda_hint: Option<f64>,
) -> Result<(SparseEstimate, f64)> {
    if omega_supp <= 0.0 {
        return Err(NorstError::invalid("omega_supp", "must be > 0"));
    }
    let obs = ProjectedObservation::new(y_t, p_hat)?;
    let sol = l1_min_noisy_hinted(&obs, xi, DEFAULT_L1_TOL, lambda_hint)?;
    let support = threshold_support(&sol.x, omega_supp);
    let x_hat = ls_debias(&obs, &support, DEFAULT_CG_TOL, DEFAULT_CG_ITERS)?;
    let l_hat = y_t - &x_hat;
    Ok((
        SparseEstimate {
            x_cs: sol.x,
            support,
            x_hat,
            l_hat,
            shrink_iters: sol.shrink_iters,
        },
        sol.lambda,
    ))
}

/// Known-support variant used by the missing-data path: skips l1 entirely
/// and debiases on the given support.
pub fn known_support_step(
    y_t: &DVector<f64>,
    p_hat: Arc<Basis>,
    support: &[usize],
) -> Result<SparseEstimate> {
    let obs = ProjectedObservation::new(y_t, p_hat)?;
    let x_hat = ls_debias(&obs, support, DEFAULT_CG_TOL, DEFAULT_CG_ITERS)?;
    let l_hat = y_t - &x_hat;
    Ok(SparseEstimate {
        x_cs: DVector::zeros(y_t.len()),
        support: support.to_vec(),
        x_hat,
        l_hat,
        shrink_iters: 0,
    })
}
