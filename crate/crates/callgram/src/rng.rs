//! Seed derivation and the pipeline's portable random generator.
//!
//! Every stochastic step (split shuffles, bootstrap draws, per-node
//! feature subsets, synthetic sampling) runs on [`ChaCha20Rng`] seeded
//! through [`derive_seed`], so results are byte-identical across
//! platforms and thread counts. The generator identity is recorded in
//! output metadata as [`RNG_ALGORITHM`].

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Name recorded in split artifacts, model files, and provenance.
pub const RNG_ALGORITHM: &str = "chacha20";

/// SplitMix64 finalizer: a full-avalanche mix of one 64-bit word.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derive an independent stream seed from a base seed and a stream index.
///
/// Used for per-class shuffles, per-tree bootstrap generators, and
/// per-cell forest seeds. Mixing both words through SplitMix64 keeps
/// streams decorrelated even for adjacent indices.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream.wrapping_add(0x6a09e667f3bcc909)))
}

/// The pipeline RNG, seeded from a derived 64-bit seed.
pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_deterministic_and_stream_sensitive() {
        assert_eq!(derive_seed(42, 0), derive_seed(42, 0));
        assert_ne!(derive_seed(42, 0), derive_seed(42, 1));
        assert_ne!(derive_seed(42, 0), derive_seed(43, 0));
    }

    #[test]
    fn splitmix64_matches_reference_vector() {
        // First output of the published SplitMix64 sequence for seed 0.
        assert_eq!(splitmix64(0), 0xe220a8397b1dcdaf);
    }
}
