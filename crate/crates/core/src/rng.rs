//! Seeding discipline: one master seed, one ChaCha stream per sample index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::C64;

/// Generator for sample `index`; independent of how samples are spread over workers.
pub fn sample_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Real Gaussian with the given variance.
pub fn normal<R: rand::Rng + ?Sized>(rng: &mut R, variance: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * variance.sqrt()
}

/// Circular complex Gaussian with E|z|² = `variance`.
pub fn complex_normal<R: rand::Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let half = 0.5 * variance;
    C64::new(normal(rng, half), normal(rng, half))
}
