//! Seeded, stream-split random sources. Every consumer draws from its own
//! counter-based stream so sub-streams stay independently reproducible.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named sub-streams of a scenario seed.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    InitialBasis = 0,
    Rotations = 1,
    Coefficients = 2,
    Supports = 3,
    Magnitudes = 4,
    Noise = 5,
}

pub(crate) fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Standard normal draw (Box-Muller).
pub(crate) fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
