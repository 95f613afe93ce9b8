//! Splittable deterministic random streams.
//!
//! Every sampler in the crate takes an explicit stream. Parallel replicas use
//! disjoint sub-streams derived from a master seed and a list of tags, so
//! results do not depend on scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The concrete generator used throughout the crate.
pub type Stream = ChaCha8Rng;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 64-bit sub-seed from a master seed and a tag path.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = master ^ 0x6A09_E667_F3BC_C908;
    let mut acc = splitmix64(&mut state);
    for &t in tags {
        state ^= t.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        acc ^= splitmix64(&mut state);
    }
    acc
}

/// Build the stream addressed by `(master, tags...)`.
pub fn stream(master: u64, tags: &[u64]) -> Stream {
    let sub = derive_seed(master, tags);
    let mut key = [0u8; 32];
    let mut state = sub;
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Well-known tag values so call sites stay greppable.
pub mod tag {
    pub const ENV: u64 = 1;
    pub const PATHS: u64 = 2;
    pub const REPLICA: u64 = 3;
    pub const BRIDGE: u64 = 4;
    pub const MIRROR: u64 = 5;
    pub const THINNING: u64 = 6;
    pub const PARTICLES: u64 = 7;
    pub const RESAMPLE: u64 = 8;
    pub const CELL: u64 = 9;
}
