//! Seeded randomness shared by data generation, initialization and training.

use core::f64::consts::TAU;

use rand::{Rng, SeedableRng};
pub use rand_chacha::ChaCha8Rng;

use crate::math;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal sample (Box-Muller).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(TAU * u2)
}
