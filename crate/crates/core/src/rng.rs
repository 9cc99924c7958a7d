//! Seed handling.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by the user
//! seed and selected by a stream id, so that independent consumers (weight
//! init, data order, per-class sampling, per-worker chunks) never share state
//! and results do not depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Well-known stream ids.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const DATA: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    /// Per-class sampling streams start here; class `c` uses `CLASS + c`.
    pub const CLASS: u64 = 1 << 16;
    /// Per-chunk streams for chunked samplers start here.
    pub const CHUNK: u64 = 1 << 32;
}

/// Generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive a child seed, e.g. for the `i`-th run of an experiment.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
