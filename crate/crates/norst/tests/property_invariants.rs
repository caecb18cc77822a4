//! Randomized invariants over the geometry and sparse-recovery primitives.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use norst::geometry::{orthonormalize, sin_theta_max, Basis};
use norst::sparse::{projected_cs_step, threshold_support};

fn gaussian_matrix(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0))
}

fn basis(n: usize, r: usize, seed: u64) -> Basis {
    orthonormalize(&gaussian_matrix(n, r, seed)).expect("full rank")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Orthonormalization keeps the invariant and the span.
    #[test]
    fn orthonormalize_invariant(seed in 0u64..1_000_000, n in 4usize..40, r in 1usize..6) {
        prop_assume!(r < n);
        let m = gaussian_matrix(n, r, seed);
        let b = orthonormalize(&m).unwrap();
        let gram = b.cols().tr_mul(b.cols());
        prop_assert!((gram - DMatrix::identity(r, r)).amax() <= 1e-10);
        let residual = b.project_out_mat(&m);
        prop_assert!(residual.amax() <= 1e-8 * m.amax().max(1.0));
    }

    /// Equal-dimension distance is symmetric.
    #[test]
    fn sin_theta_symmetry(seed in 0u64..1_000_000, n in 4usize..30, r in 1usize..5) {
        prop_assume!(r < n);
        let a = basis(n, r, seed);
        let b = basis(n, r, seed ^ 0xabcdef);
        let ab = sin_theta_max(&a, &b).unwrap();
        let ba = sin_theta_max(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-10, "ab={ab}, ba={ba}");
    }

    /// Raising the support threshold never grows the support.
    #[test]
    fn support_threshold_monotone(values in prop::collection::vec(-20.0f64..20.0, 1..64),
                                  omega in 0.01f64..10.0) {
        let x = DVector::from_vec(values);
        let small = threshold_support(&x, omega);
        let large = threshold_support(&x, omega * 1.5);
        prop_assert!(large.len() <= small.len());
        for idx in &large {
            prop_assert!(small.contains(idx));
        }
    }

    /// The frame decomposition identity holds for arbitrary inputs.
    #[test]
    fn decomposition_identity(seed in 0u64..1_000_000, n in 8usize..32, spike in -20.0f64..20.0) {
        let b = Arc::new(basis(n, 2, seed));
        let mut y = b.cols() * DVector::from_column_slice(&[1.0, -0.6]);
        y[(seed as usize) % n] += spike;
        let est = projected_cs_step(&y, b, 0.67, 5.0).unwrap();
        let recomposed = &est.x_hat + &est.l_hat;
        let scale = y.amax().max(1.0);
        prop_assert!((recomposed - &y).amax() <= 1e-14 * scale);
        for i in 0..n {
            if !est.support.contains(&i) {
                prop_assert!(est.x_hat[i] == 0.0);
            }
        }
    }
}

/// Triangle inequality on 1000 random equal-dimension triples.
#[test]
fn sin_theta_triangle_inequality_thousand_triples() {
    let mut worst: f64 = f64::NEG_INFINITY;
    for trial in 0..1000u64 {
        let n = 6 + (trial % 20) as usize;
        let r = 1 + (trial % 3) as usize;
        let q1 = basis(n, r, trial * 3 + 1);
        let q2 = basis(n, r, trial * 3 + 2);
        let q3 = basis(n, r, trial * 3 + 3);
        let d13 = sin_theta_max(&q1, &q3).unwrap();
        let d12 = sin_theta_max(&q1, &q2).unwrap();
        let d23 = sin_theta_max(&q2, &q3).unwrap();
        worst = worst.max(d13 - (d12 + d23));
    }
    assert!(worst <= 1e-9, "triangle violation {worst:e}");
}
