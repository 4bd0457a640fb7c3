//! Reproducible per-example random streams.
//!
//! Every random draw in the crate is taken from a [`ChaCha8Rng`] whose seed is
//! derived from a global seed, a stream tag and an example key. Parallel and
//! serial runs therefore see identical streams, and reordering a dataset does
//! not change what any single example draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep unrelated consumers of the same global seed independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Jitter = 0x6a69_7474,
    Noise = 0x6e6f_6973,
    Oracle = 0x6f72_636c,
    Shuffle = 0x7368_7566,
    Dataset = 0x6461_7461,
    Taxonomy = 0x7461_786f,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a global seed, a stream tag and an example key into one 64-bit seed.
pub fn derive_seed(seed: u64, stream: Stream, key: u64) -> u64 {
    let a = splitmix64(seed ^ (stream as u64).rotate_left(17));
    splitmix64(a ^ splitmix64(key))
}

pub fn stream_rng(seed: u64, stream: Stream, key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, key))
}

/// Stable 64-bit key for a textual example id (FNV-1a).
pub fn example_key(id: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in id.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
