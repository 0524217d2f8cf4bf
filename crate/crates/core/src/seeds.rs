//! Deterministic seed derivation.
//!
//! Every stage of the pipeline draws its randomness from a single master
//! seed expanded per stage through `derive`, so a run is reproducible from
//! one `--seed` value and independent stages never share an RNG stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a child seed from a master seed and a context label.
///
/// The derivation is `sha256(master_le || context)` truncated to the first
/// eight bytes, so distinct labels give independent streams.
pub fn derive(master: u64, context: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(context.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Seeded RNG for a derived context.
pub fn rng(master: u64, context: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, context))
}

/// Standard normal sample via Box-Muller.
pub fn standard_normal<R: rand::Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
