//! Seeding conventions shared by every random operation in the crate.
//!
//! A single portable counter-based generator (ChaCha8) backs all sampling,
//! and substreams (per trial, per bootstrap replicate, per Monte Carlo draw)
//! are derived from a parent seed with a SplitMix64 mix so that work can be
//! fanned out across threads without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator identifier recorded in output metadata.
pub const RNG_NAME: &str = "chacha8";

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer; a cheap bijective mixer over `u64`.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of substream `stream` from a parent `seed`.
///
/// Distinct streams give independent generators; the mapping is fixed so
/// results reproduce across platforms and thread counts.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(0xA076_1D64_78BD_642F)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn derive_seed_is_deterministic_and_stream_sensitive() {
        assert_eq!(derive_seed(7, 0), derive_seed(7, 0));
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }

    #[test]
    fn rng_streams_are_reproducible() {
        let mut a = rng_from_seed(derive_seed(42, 3));
        let mut b = rng_from_seed(derive_seed(42, 3));
        for _ in 0..16 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}
