//! Deterministic random streams.
//!
//! Every random draw in the pipeline comes from a ChaCha8 generator seeded
//! from a master seed and a stream name. One seed therefore reproduces the
//! whole pipeline bit for bit, and the stages (generation, training init,
//! solver init, perturbations) stay decoupled: consuming more randomness in
//! one stage never shifts another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a, used to fold stream names into seeds.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

/// Named substream of the master seed.
pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name.as_bytes()))
}

/// Per-node substream. Perturbation-based metrics use one stream per target
/// node so that parallel evaluation order cannot change results.
pub fn node_stream(seed: u64, name: &str, node: usize) -> ChaCha8Rng {
    let node_mix = (node as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name.as_bytes()) ^ node_mix)
}

/// Standard normal via Box-Muller.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
