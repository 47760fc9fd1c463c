//! The single PRNG used for every random draw in the engine.

/// ChaCha with 8 rounds; its output stream is fixed by the algorithm, not by
/// the crate version.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Identifier written into result metadata.
pub const PRNG_ID: &str =
    "chacha8 (rand_chacha 0.9, seed_from_u64); gaussian: rand_distr 0.5 StandardNormal";

/// Derives an independent seed for a named sub-stream of a run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
