//! Deterministic random streams.
//!
//! Every random draw in the toolkit comes from a ChaCha stream derived from
//! the global seed plus a purpose tag and context indices, so parallel or
//! resumed runs reproduce serial results exactly. Same seed, same sequence.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The deterministic stream type used throughout.
pub type StreamRng = ChaCha8Rng;

/// Purpose tags keep independent streams from colliding.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const AUGMENT: u64 = 3;
    pub const DROPOUT: u64 = 4;
    pub const SYNTH: u64 = 5;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derive a stream from a seed and an arbitrary list of context words.
pub fn stream(seed: u64, parts: &[u64]) -> StreamRng {
    let mut state = seed ^ 0xA076_1D64_78BD_642F;
    for &p in parts {
        state ^= splitmix64(&mut state) ^ p.wrapping_mul(0x9E3779B97F4A7C15);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Stable FNV-1a hash for strings used as stream context (sample ids).
/// Not `DefaultHasher`: this one never changes across toolchains.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
