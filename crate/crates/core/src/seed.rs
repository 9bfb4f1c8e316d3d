//! Seed derivation. Every random draw is keyed by `(master_seed, stream)`
//! so results never depend on scheduling.
//!
//! Recipes (all arithmetic wrapping on `u64`):
//!
//! ```text
//! splitmix64(x):
//!     z = x + 0x9E3779B97F4A7C15
//!     z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!     z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!     return z ^ (z >> 31)
//!
//! replicate_seed(master, r) = splitmix64(master ^ splitmix64(r))
//! ```
//!
//! A per-tree ChaCha8 key is the four words `splitmix64(master + i * 0x9E3779B97F4A7C15)`
//! for `i = 0..4`, little-endian; the stream id is the mother's label for
//! noise draws and `2^63 | label` for random initial states.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream-id bit reserved for initial-state draws.
pub const INIT_STREAM_BIT: u64 = 1 << 63;

#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `r` under `master`.
#[inline]
pub fn replicate_seed(master: u64, r: u64) -> u64 {
    splitmix64(master ^ splitmix64(r))
}

/// 256-bit ChaCha key expanded from a 64-bit seed.
pub fn chacha_key(master: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    for i in 0..4 {
        let w = splitmix64(master.wrapping_add((i as u64).wrapping_mul(GOLDEN)));
        key[8 * i..8 * i + 8].copy_from_slice(&w.to_le_bytes());
    }
    key
}

/// Generator for one stream of a keyed family.
#[inline]
pub fn stream_rng(key: &[u8; 32], stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(*key);
    rng.set_stream(stream);
    rng
}
