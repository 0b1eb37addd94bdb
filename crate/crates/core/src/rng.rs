//! Seed fan-out: every random stream is derived from one master seed so results
//! do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed for `(stream, index)` under `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream)) ^ index)
}

pub fn rng_for(master: u64, stream: u64, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(master, stream, index))
}

/// Stream tags, one per consumer of randomness.
pub mod stream {
    pub const TREE: u64 = 1;
    pub const BALANCE: u64 = 2;
    pub const FOLDS: u64 = 3;
    pub const RANSAC: u64 = 4;
    pub const SYNTH: u64 = 5;
}

/// Standard normal sample (Box-Muller).
pub fn normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}
