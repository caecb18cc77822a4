//! Dense subspace primitives: orthonormal bases, principal-angle distance,
//! truncated SVD, restricted-isometry / coherence diagnostics, and rotations
//! generated by skew-symmetric matrices.
//!
//! Everything here is a pure function of its inputs; no shared state.

use nalgebra::{DMatrix, DVector};

use crate::error::{NorstError, Result};

/// Max-norm tolerance on `P'P - I` for a valid basis.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Numerical-rank tolerance used by [`orthonormalize`].
pub const RANK_TOL: f64 = 1e-10;

const POWER_ITER_TOL: f64 = 1e-10;
const POWER_ITER_CAP: usize = 1000;

/// An `n x r` matrix with mutually orthonormal columns representing an
/// `r`-dimensional subspace of `R^n`. `r = 0` (the trivial subspace) is
/// allowed; projections then reduce to the identity complement.
///
/// The column signs and ordering are unconstrained: compare bases with
/// [`sin_theta_max`], never element-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    cols: DMatrix<f64>,
}

impl Basis {
    /// Wraps a matrix whose columns are already orthonormal.
    pub fn from_orthonormal(cols: DMatrix<f64>) -> Result<Self> {
        let (n, r) = cols.shape();
        if r > n {
            return Err(NorstError::DimensionMismatch {
                context: "basis columns exceed ambient dimension",
                left: r,
                right: n,
            });
        }
        let gram = cols.tr_mul(&cols);
        let mut dev = 0.0f64;
        for i in 0..r {
            for j in 0..r {
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((gram[(i, j)] - target).abs());
            }
        }
        if dev > ORTHONORMALITY_TOL {
            return Err(NorstError::invalid(
                "basis",
                format!("columns not orthonormal: max |P'P - I| = {dev:e}"),
            ));
        }
        Ok(Basis { cols })
    }

    /// The trivial subspace: an `n x 0` basis.
    pub fn empty(n: usize) -> Self {
        Basis {
            cols: DMatrix::zeros(n, 0),
        }
    }

    /// Span of the first `r` coordinate axes.
    pub fn standard(n: usize, r: usize) -> Self {
        assert!(r <= n);
        Basis {
            cols: DMatrix::identity(n, n).columns(0, r).into_owned(),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.cols.nrows()
    }

    pub fn dim(&self) -> usize {
        self.cols.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.ncols() == 0
    }

    pub fn cols(&self) -> &DMatrix<f64> {
        &self.cols
    }

    /// `P (P' v)`: orthogonal projection of `v` onto the subspace. O(nr).
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.is_empty() {
            return DVector::zeros(v.len());
        }
        &self.cols * (self.cols.tr_mul(v))
    }

    /// `(I - P P') v`: projection onto the orthogonal complement. O(nr).
    /// This is the `Psi` application used throughout; `Psi` is never
    /// materialized as an `n x n` matrix.
    pub fn project_out(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.is_empty() {
            return v.clone();
        }
        v - &self.cols * (self.cols.tr_mul(v))
    }

    /// Column-wise [`Basis::project_out`] on an `n x m` matrix.
    pub fn project_out_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        if self.is_empty() {
            return m.clone();
        }
        m - &self.cols * (self.cols.tr_mul(m))
    }

    /// Largest squared row norm, `max_i ||I_i' P||^2`.
    pub fn max_row_norm_sq(&self) -> f64 {
        (0..self.ambient_dim())
            .map(|i| self.cols.row(i).norm_squared())
            .fold(0.0, f64::max)
    }

    /// Coherence parameter `mu = (n/r) max_i ||I_i' P||^2`. At least 1 up to
    /// rounding for any basis; equals 1 only when row mass is uniform.
    pub fn coherence(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.max_row_norm_sq() * self.ambient_dim() as f64 / self.dim() as f64
    }
}

/// Coherence and restricted-isometry diagnostics for a basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubspaceDiag {
    pub coherence_mu: f64,
    /// `delta_s(I - PP')`, exact or upper bound depending on the mode used.
    pub ric_delta: f64,
    pub ric_is_bound: bool,
    /// Support-size bound the RIC was evaluated at.
    pub s: usize,
}

/// How [`ric_of_projector`] evaluates `delta_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RicMode {
    /// Enumerate every support of size `s`. Errors when C(n, s) > 1e6.
    Exact,
    /// The row-norm bound `s * max_i ||I_i' P||^2`; always >= exact.
    Bound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RicEstimate {
    pub value: f64,
    pub is_bound: bool,
}

/// Result of a truncated SVD. `degenerate_gap` is set when
/// `sigma_r - sigma_{r+1} < 1e-12 * sigma_1`, in which case the returned
/// basis is an arbitrary selection within the tied block.
#[derive(Debug, Clone)]
pub struct TopSingularVectors {
    pub basis: Basis,
    /// Top `r` singular values, descending.
    pub singular_values: Vec<f64>,
    pub degenerate_gap: bool,
}

/// Orthonormalizes the columns of `m` (column-pivoted QR), preserving span.
///
/// Errors when the numerical rank at tolerance [`RANK_TOL`] is below the
/// column count, signaling a degenerate subspace.
pub fn orthonormalize(m: &DMatrix<f64>) -> Result<Basis> {
    let (n, k) = m.shape();
    if k > n {
        return Err(NorstError::DimensionMismatch {
            context: "orthonormalize: more columns than rows",
            left: k,
            right: n,
        });
    }
    if k == 0 {
        return Ok(Basis::empty(n));
    }
    let qr = m.clone().col_piv_qr();
    let r_mat = qr.r();
    let scale = r_mat[(0, 0)].abs().max(1.0);
    let rank = (0..k)
        .take_while(|&i| r_mat[(i, i)].abs() > RANK_TOL * scale)
        .count();
    if rank < k {
        return Err(NorstError::RankDeficient {
            rank,
            expected: k,
            tol: RANK_TOL,
        });
    }
    let q = qr.q().columns(0, k).into_owned();
    Basis::from_orthonormal(q)
}

/// `sin theta_max(P1, P2) = ||(I - P1 P1') P2||_2`: the sine of the largest
/// principal angle of `P2` against `P1`. Symmetric when the two bases have
/// equal dimension. Always in `[0, 1]`.
pub fn sin_theta_max(p1: &Basis, p2: &Basis) -> Result<f64> {
    if p1.ambient_dim() != p2.ambient_dim() {
        return Err(NorstError::DimensionMismatch {
            context: "sin_theta_max: ambient dimensions differ",
            left: p1.ambient_dim(),
            right: p2.ambient_dim(),
        });
    }
    if p2.is_empty() {
        return Ok(0.0);
    }
    let residual = p1.project_out_mat(p2.cols());
    Ok(spectral_norm(&residual).min(1.0))
}

/// Spectral norm (largest singular value) via power iteration on the smaller
/// Gram matrix. Deterministic starts, tolerance 1e-10, 1000-iteration cap.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let gram = if cols <= rows {
        m.tr_mul(m)
    } else {
        m * m.transpose()
    };
    lambda_max_sym(&gram).max(0.0).sqrt()
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
///
/// Small matrices go through a dense symmetric eigendecomposition. Larger
/// ones use power iteration from three fixed start vectors (all-ones,
/// alternating signs, and a seeded pseudo-random pattern) so that a start
/// accidentally orthogonal to the top eigenvector cannot go unnoticed.
pub fn lambda_max_sym(g: &DMatrix<f64>) -> f64 {
    let k = g.nrows();
    assert_eq!(k, g.ncols(), "lambda_max_sym expects a square matrix");
    if k == 0 {
        return 0.0;
    }
    if k <= 8 {
        let eig = g.clone().symmetric_eigen();
        return eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    }

    let starts = [
        DVector::from_element(k, 1.0),
        DVector::from_fn(k, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 }),
        DVector::from_fn(k, |i, _| ((i as f64 + 1.0) * 12.9898).sin()),
    ];
    starts
        .into_iter()
        .map(|v0| power_iteration(g, v0))
        .fold(0.0, f64::max)
}

fn power_iteration(g: &DMatrix<f64>, mut v: DVector<f64>) -> f64 {
    let norm = v.norm();
    if norm == 0.0 {
        return 0.0;
    }
    v /= norm;
    let mut lambda = 0.0f64;
    for _ in 0..POWER_ITER_CAP {
        let w = g * &v;
        let new_lambda = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / wn;
        if (new_lambda - lambda).abs() <= POWER_ITER_TOL * new_lambda.abs().max(1e-30) {
            return new_lambda;
        }
        lambda = new_lambda;
    }
    lambda
}

/// Top `r` left singular vectors of an `n x m` matrix, computed through the
/// eigendecomposition of the smaller Gram matrix.
pub fn top_r_left_singular_vectors(m: &DMatrix<f64>, r: usize) -> Result<TopSingularVectors> {
    let (n, cols) = m.shape();
    if r > n.min(cols) {
        return Err(NorstError::DimensionMismatch {
            context: "top_r_left_singular_vectors: r exceeds min(n, cols)",
            left: r,
            right: n.min(cols),
        });
    }
    if r == 0 {
        return Ok(TopSingularVectors {
            basis: Basis::empty(n),
            singular_values: Vec::new(),
            degenerate_gap: false,
        });
    }

    // Eigendecompose the smaller Gram matrix; recover left vectors from the
    // right ones when the column side is smaller.
    let use_row_gram = n <= cols;
    let gram = if use_row_gram { m * m.transpose() } else { m.tr_mul(m) };
    let eig = gram.symmetric_eigen();
    let dim = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalues are finite")
    });

    let sigma_at = |rank: usize| -> f64 {
        if rank < dim {
            eig.eigenvalues[order[rank]].max(0.0).sqrt()
        } else {
            0.0
        }
    };
    let sigma1 = sigma_at(0);
    let gap = sigma_at(r - 1) - sigma_at(r);
    let degenerate_gap = gap < 1e-12 * sigma1.max(f64::MIN_POSITIVE);

    let mut u = DMatrix::zeros(n, r);
    let mut singular_values = Vec::with_capacity(r);
    // Columns with effectively zero singular value carry no direction
    // information; they are filled below by orthonormal completion.
    let sigma_floor = sigma1 * 1e-14;
    let mut filled = 0usize;
    for rank in 0..r {
        let idx = order[rank];
        let sigma = sigma_at(rank);
        singular_values.push(sigma);
        if sigma <= sigma_floor {
            break;
        }
        let col = if use_row_gram {
            eig.eigenvectors.column(idx).into_owned()
        } else {
            m * eig.eigenvectors.column(idx) / sigma
        };
        u.set_column(rank, &col);
        filled += 1;
    }
    while singular_values.len() < r {
        singular_values.push(0.0);
    }

    let basis = if filled == r {
        // One clean-up QR pass keeps the orthonormality invariant tight even
        // when the Gram route loses a few digits.
        orthonormalize(&u)?
    } else {
        complete_basis(u.columns(0, filled).into_owned(), r)?
    };
    Ok(TopSingularVectors {
        basis,
        singular_values,
        degenerate_gap,
    })
}

/// Extends `partial` (n x k, full column rank, k <= r) to an orthonormal
/// n x r basis by appending coordinate directions.
fn complete_basis(partial: DMatrix<f64>, r: usize) -> Result<Basis> {
    let n = partial.nrows();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(r);
    if partial.ncols() > 0 {
        let q = orthonormalize(&partial)?;
        for c in q.cols().column_iter() {
            cols.push(c.into_owned());
        }
    }
    let mut axis = 0usize;
    while cols.len() < r && axis < n {
        let mut v = DVector::zeros(n);
        v[axis] = 1.0;
        for c in &cols {
            let proj = c.dot(&v);
            v -= c * proj;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / norm);
        }
        axis += 1;
    }
    if cols.len() < r {
        return Err(NorstError::RankDeficient {
            rank: cols.len(),
            expected: r,
            tol: RANK_TOL,
        });
    }
    let mut out = DMatrix::zeros(n, r);
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    Basis::from_orthonormal(out)
}

/// Orthonormalizes keeping only the numerically independent columns
/// (column-pivoted QR truncated at `tol` relative to the leading diagonal).
/// Returns the basis and the number of dropped columns.
pub fn orthonormalize_trunc(m: &DMatrix<f64>, tol: f64) -> Result<(Basis, usize)> {
    let (n, k) = m.shape();
    if k == 0 {
        return Ok((Basis::empty(n), 0));
    }
    let qr = m.clone().col_piv_qr();
    let r_mat = qr.r();
    let kk = k.min(n);
    let scale = r_mat[(0, 0)].abs().max(f64::MIN_POSITIVE);
    let rank = (0..kk)
        .take_while(|&i| r_mat[(i, i)].abs() > tol * scale)
        .count();
    if rank == 0 {
        return Ok((Basis::empty(n), k));
    }
    let q = qr.q().columns(0, rank).into_owned();
    Ok((Basis::from_orthonormal(q)?, k - rank))
}

const RIC_EXACT_MAX_SUPPORTS: u128 = 1_000_000;

/// Restricted isometry constant of the projector `I - PP'`:
/// `delta_s = max_{|T| <= s} ||I_T' P||^2`.
pub fn ric_of_projector(p: &Basis, s: usize, mode: RicMode) -> Result<RicEstimate> {
    let n = p.ambient_dim();
    if s == 0 {
        return Ok(RicEstimate {
            value: 0.0,
            is_bound: matches!(mode, RicMode::Bound),
        });
    }
    if s > n {
        return Err(NorstError::invalid(
            "s",
            format!("support size {s} exceeds ambient dimension {n}"),
        ));
    }
    match mode {
        RicMode::Bound => Ok(RicEstimate {
            value: s as f64 * p.max_row_norm_sq(),
            is_bound: true,
        }),
        RicMode::Exact => {
            let combos = binomial(n, s);
            if combos > RIC_EXACT_MAX_SUPPORTS {
                return Err(NorstError::RicEnumerationTooLarge {
                    n,
                    s,
                    combinations: combos,
                    max: RIC_EXACT_MAX_SUPPORTS,
                });
            }
            // The max over |T| <= s is attained at |T| = s: adding a row
            // never shrinks the spectral norm of the row submatrix.
            let mut best = 0.0f64;
            let mut support: Vec<usize> = (0..s).collect();
            loop {
                let sub = select_rows(p.cols(), &support);
                let nrm = spectral_norm(&sub);
                best = best.max(nrm * nrm);
                if !next_combination(&mut support, n) {
                    break;
                }
            }
            Ok(RicEstimate {
                value: best.min(1.0),
                is_bound: false,
            })
        }
    }
}

/// Coherence plus RIC in one report.
pub fn diagnose(p: &Basis, s: usize, mode: RicMode) -> Result<SubspaceDiag> {
    let ric = ric_of_projector(p, s, mode)?;
    Ok(SubspaceDiag {
        coherence_mu: p.coherence(),
        ric_delta: ric.value,
        ric_is_bound: ric.is_bound,
        s,
    })
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
        if acc > RIC_EXACT_MAX_SUPPORTS.saturating_mul(1000) {
            return acc;
        }
    }
    acc
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), m.ncols());
    for (i, &r) in rows.iter().enumerate() {
        out.set_row(i, &m.row(r));
    }
    out
}

/// Advances `support` to the next size-|support| combination of `0..n` in
/// lexicographic order; returns false after the last one.
fn next_combination(support: &mut [usize], n: usize) -> bool {
    let k = support.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if support[i] < n - (k - i) {
            support[i] += 1;
            for j in i + 1..k {
                support[j] = support[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

const SKEW_TOL: f64 = 1e-10;

/// `exp(gamma B) * P`, re-orthonormalized. `B` must be skew-symmetric, which
/// makes the exponential orthogonal and so preserves subspace dimension.
///
/// The exponential acts on the n x r block directly (scaling plus a Taylor
/// series applied repeatedly), never forming the n x n exponential.
pub fn rotate_subspace(p: &Basis, skew: &DMatrix<f64>, gamma: f64) -> Result<Basis> {
    let n = p.ambient_dim();
    if skew.nrows() != n || skew.ncols() != n {
        return Err(NorstError::DimensionMismatch {
            context: "rotate_subspace: generator shape",
            left: skew.nrows(),
            right: n,
        });
    }
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((skew[(i, j)] + skew[(j, i)]).abs());
        }
    }
    if dev > SKEW_TOL {
        return Err(NorstError::NotSkewSymmetric { deviation: dev });
    }
    if gamma == 0.0 || p.is_empty() {
        return Ok(p.clone());
    }

    // Scale so the per-step Taylor series converges fast, then apply the
    // step 2^m times. The infinity-norm estimate is loose but only costs
    // extra halvings.
    let norm_bound = gamma.abs() * skew.amax() * n as f64;
    let squarings: u32 = if norm_bound > 0.5 {
        (norm_bound / 0.5).log2().ceil().min(40.0) as u32
    } else {
        0
    };
    let step = gamma / f64::powi(2.0, squarings as i32);
    let mut block = p.cols().clone();
    for _ in 0..(1u64 << squarings) {
        block = expm_action(skew, step, &block);
    }
    orthonormalize(&block)
}

/// Taylor-series action `exp(t B) V` for `||t B||` at most ~0.5.
fn expm_action(b: &DMatrix<f64>, t: f64, v: &DMatrix<f64>) -> DMatrix<f64> {
    let mut result = v.clone();
    let mut term = v.clone();
    for k in 1..=30 {
        term = b * term * (t / k as f64);
        result += &term;
        if term.amax() <= 1e-18 * result.amax().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0))
    }

    pub(crate) fn random_basis(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Basis {
        orthonormalize(&random_matrix(rng, n, r)).expect("random matrix has full rank")
    }

    #[test]
    fn orthonormalize_identity_block() {
        let m = DMatrix::identity(3, 2);
        let b = orthonormalize(&m).unwrap();
        assert_eq!(b.ambient_dim(), 3);
        assert_eq!(b.dim(), 2);
        let target = Basis::standard(3, 2);
        assert!(sin_theta_max(&b, &target).unwrap() < 1e-12);
    }

    #[test]
    fn orthonormalize_diagonal_scaling() {
        let m = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 3.0, 0.0, 0.0]);
        let b = orthonormalize(&m).unwrap();
        // Columns are e1, e2 up to sign and order.
        assert!(sin_theta_max(&b, &Basis::standard(3, 2)).unwrap() < 1e-12);
    }

    #[test]
    fn orthonormalize_random_span_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_matrix(&mut rng, 50, 5);
        let b = orthonormalize(&m).unwrap();
        let gram = b.cols().tr_mul(b.cols());
        let dev = (gram - DMatrix::identity(5, 5)).amax();
        assert!(dev <= 1e-10, "orthonormality deviation {dev:e}");
        let residual = b.project_out_mat(&m);
        assert!(
            spectral_norm(&residual) <= 1e-8,
            "span not preserved: {:e}",
            spectral_norm(&residual)
        );
    }

    #[test]
    fn orthonormalize_rank_deficient_errors() {
        let mut m = DMatrix::zeros(4, 2);
        m[(0, 0)] = 1.0;
        m[(0, 1)] = 1.0; // duplicate column
        let err = orthonormalize(&m).unwrap_err();
        assert!(matches!(err, NorstError::RankDeficient { .. }));
    }

    #[test]
    fn sin_theta_identical_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_basis(&mut rng, 20, 4);
        assert!(sin_theta_max(&b, &b).unwrap() <= 1e-12);
    }

    #[test]
    fn sin_theta_orthogonal_axes() {
        let p1 = Basis::standard(2, 1);
        let e2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let p2 = Basis::from_orthonormal(e2).unwrap();
        assert!((sin_theta_max(&p1, &p2).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn sin_theta_planar_angle() {
        let theta: f64 = 0.3;
        let p1 = Basis::standard(2, 1);
        let rotated = DMatrix::from_column_slice(2, 1, &[theta.cos(), theta.sin()]);
        let p2 = Basis::from_orthonormal(rotated).unwrap();
        let got = sin_theta_max(&p1, &p2).unwrap();
        assert!((got - theta.sin()).abs() <= 1e-12, "got {got}");
    }

    #[test]
    fn sin_theta_dimension_mismatch_errors() {
        let p1 = Basis::standard(3, 1);
        let p2 = Basis::standard(4, 1);
        assert!(sin_theta_max(&p1, &p2).is_err());
    }

    #[test]
    fn top_r_diagonal() {
        let mut m = DMatrix::zeros(5, 3);
        m[(0, 0)] = 3.0;
        m[(1, 1)] = 2.0;
        m[(2, 2)] = 1.0;
        let out = top_r_left_singular_vectors(&m, 2).unwrap();
        assert!(!out.degenerate_gap);
        assert!((out.singular_values[0] - 3.0).abs() < 1e-10);
        assert!((out.singular_values[1] - 2.0).abs() < 1e-10);
        assert!(sin_theta_max(&out.basis, &Basis::standard(5, 2)).unwrap() < 1e-10);
    }

    #[test]
    fn top_r_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = DVector::from_fn(12, |_, _| rng.gen_range(-1.0..1.0f64));
        let v = DVector::from_fn(30, |_, _| rng.gen_range(-1.0..1.0f64));
        let m = &u * v.transpose();
        let out = top_r_left_singular_vectors(&m, 1).unwrap();
        let expected = orthonormalize(&DMatrix::from_column_slice(12, 1, u.as_slice())).unwrap();
        assert!(sin_theta_max(&out.basis, &expected).unwrap() < 1e-10);
    }

    #[test]
    fn top_r_matches_full_svd_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // Exact rank-5 plus 1e-8 noise; oracle = dense SVD of the same matrix.
        let left = random_matrix(&mut rng, 40, 5);
        let right = random_matrix(&mut rng, 5, 200);
        let noise = random_matrix(&mut rng, 40, 200) * 1e-8;
        let m = &left * &right + noise;

        let planted = orthonormalize(&left).unwrap();
        let out = top_r_left_singular_vectors(&m, 5).unwrap();
        assert!(sin_theta_max(&out.basis, &planted).unwrap() <= 1e-6);

        let svd = m.clone().svd(true, false);
        let u_full = svd.u.as_ref().unwrap().columns(0, 5).into_owned();
        let oracle = Basis::from_orthonormal(u_full).unwrap();
        assert!(sin_theta_max(&out.basis, &oracle).unwrap() <= 1e-8);
    }

    #[test]
    fn top_r_degenerate_gap_flagged() {
        let m = DMatrix::identity(6, 6); // all singular values tied at 1
        let out = top_r_left_singular_vectors(&m, 3).unwrap();
        assert!(out.degenerate_gap);
        // Basis is still orthonormal.
        let gram = out.basis.cols().tr_mul(out.basis.cols());
        assert!((gram - DMatrix::identity(3, 3)).amax() <= 1e-10);
    }

    #[test]
    fn ric_axis_vector() {
        let p = Basis::standard(4, 1);
        let got = ric_of_projector(&p, 1, RicMode::Exact).unwrap();
        assert!((got.value - 1.0).abs() <= 1e-12);
        assert!(!got.is_bound);
    }

    #[test]
    fn ric_uniform_vector() {
        let v = DMatrix::from_column_slice(4, 1, &[0.5, 0.5, 0.5, 0.5]);
        let p = Basis::from_orthonormal(v).unwrap();
        let got = ric_of_projector(&p, 2, RicMode::Exact).unwrap();
        assert!((got.value - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn ric_exact_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_basis(&mut rng, 10, 2);
        let got = ric_of_projector(&p, 3, RicMode::Exact).unwrap().value;

        // Oracle: enumerate supports, dense SVD per submatrix.
        let mut best = 0.0f64;
        let mut support = vec![0usize, 1, 2];
        loop {
            let sub = select_rows(p.cols(), &support);
            let sigma = sub.svd(false, false).singular_values[0];
            best = best.max(sigma * sigma);
            if !next_combination(&mut support, 10) {
                break;
            }
        }
        assert!((got - best).abs() <= 1e-12, "got {got}, oracle {best}");
    }

    #[test]
    fn ric_bound_dominates_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [6usize, 9, 12] {
            for s in 1..=3usize {
                let p = random_basis(&mut rng, n, 2);
                let exact = ric_of_projector(&p, s, RicMode::Exact).unwrap().value;
                let bound = ric_of_projector(&p, s, RicMode::Bound).unwrap().value;
                assert!(bound + 1e-12 >= exact, "n={n} s={s}: {bound} < {exact}");
            }
        }
    }

    #[test]
    fn ric_exact_too_large_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = random_basis(&mut rng, 200, 2);
        let err = ric_of_projector(&p, 5, RicMode::Exact).unwrap_err();
        assert!(matches!(err, NorstError::RicEnumerationTooLarge { .. }));
    }

    #[test]
    fn rotate_gamma_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = random_basis(&mut rng, 10, 3);
        let skew_raw = random_matrix(&mut rng, 10, 10);
        let skew = &skew_raw - skew_raw.transpose();
        let rotated = rotate_subspace(&p, &skew, 0.0).unwrap();
        assert!(sin_theta_max(&p, &rotated).unwrap() <= 1e-12);
    }

    #[test]
    fn rotate_planar() {
        let p = Basis::standard(2, 1);
        let skew = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let rotated = rotate_subspace(&p, &skew, 0.3).unwrap();
        let expected = Basis::from_orthonormal(DMatrix::from_column_slice(
            2,
            1,
            &[0.3f64.cos(), 0.3f64.sin()],
        ))
        .unwrap();
        assert!(sin_theta_max(&rotated, &expected).unwrap() <= 1e-9);
    }

    #[test]
    fn rotate_standard_normal_calibration() {
        // gamma = 0.001 with an unscaled standard-normal skew generator at
        // n = 100 lands near 0.01 subspace motion (within a factor of 3).
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p = random_basis(&mut rng, 100, 10);
        let g = DMatrix::from_fn(100, 100, |_, _| {
            // Box-Muller from two uniforms keeps the dependency surface small.
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        });
        let skew = &g - g.transpose();
        let rotated = rotate_subspace(&p, &skew, 0.001).unwrap();
        let moved = sin_theta_max(&rotated, &p).unwrap();
        assert!(
            moved > 0.01 / 3.0 && moved < 0.03,
            "motion {moved} outside [0.0033, 0.03]"
        );
    }

    #[test]
    fn rotate_non_skew_errors() {
        let p = Basis::standard(3, 1);
        let not_skew = DMatrix::identity(3, 3);
        assert!(matches!(
            rotate_subspace(&p, &not_skew, 0.1),
            Err(NorstError::NotSkewSymmetric { .. })
        ));
    }

    #[test]
    fn rotate_monotone_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let p = random_basis(&mut rng, 40, 4);
        let raw = random_matrix(&mut rng, 40, 40);
        let skew = &raw - raw.transpose();
        let mut last = 0.0;
        for gamma in [1e-4, 3e-4, 1e-3, 3e-3] {
            let moved = sin_theta_max(&rotate_subspace(&p, &skew, gamma).unwrap(), &p).unwrap();
            assert!(moved >= last, "not monotone at gamma={gamma}");
            last = moved;
        }
    }

    #[test]
    fn coherence_of_uniform_rows_is_one() {
        // Hadamard-style 4x2: every row carries mass 1/2.
        let m = DMatrix::from_row_slice(4, 2, &[0.5, 0.5, 0.5, -0.5, -0.5, 0.5, -0.5, -0.5]);
        let p = Basis::from_orthonormal(m).unwrap();
        assert!((p.coherence() - 1.0).abs() <= 1e-12);
    }
}
