//! Seed derivation.
//!
//! Every random stream in the crate is keyed by a top-level seed plus a
//! stream identifier (trial index, qubit id, stage name). Streams never depend
//! on the order in which work is scheduled, so parallel and serial runs agree
//! bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th sub-stream of `seed`.
pub fn substream(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_mul(GOLDEN).wrapping_add(1)))
}

/// Seed of a named sub-stream, e.g. `named_stream(seed, "plan", 0)`.
pub fn named_stream(seed: u64, name: &str, index: u64) -> u64 {
    // FNV-1a over the name bytes.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    substream(substream(seed, h), index)
}

pub fn stream_rng(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
