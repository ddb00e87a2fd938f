//! Per-path random streams.
//!
//! A path's stream depends only on `(seed, path_index)`, so any schedule of
//! paths over any number of threads reproduces the same draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent ChaCha8 stream for path `index` under `seed`.
pub fn path_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Stable identifier stored in a path for provenance.
pub fn path_seed_id(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
