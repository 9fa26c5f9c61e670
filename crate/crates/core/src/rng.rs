//! Counter-based randomness.
//!
//! Every random quantity in a run is a pure function of a key: a 64-bit seed,
//! a stream tag and one or two counters (site index, path hash, replicate).
//! Nothing carries mutable generator state between vertices, so replicates can
//! be scheduled in any order and environments can be regenerated on demand.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer.
#[inline]
pub const fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent streams drawn from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u64)]
pub enum StreamTag {
    StationCount = 1,
    Radius = 2,
    Offspring = 3,
    Label = 4,
    Lookahead = 5,
    ReplicateEnv = 6,
    ReplicateProc = 7,
    Panel = 8,
    Aggregate = 9,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    base: u64,
}

impl StreamKey {
    pub fn new(seed: u64, tag: StreamTag) -> Self {
        let base = mix64(seed ^ mix64((tag as u64).wrapping_mul(GOLDEN)));
        Self { base }
    }

    #[inline]
    pub fn word(&self, a: u64) -> u64 {
        mix64(self.base ^ mix64(a.wrapping_add(GOLDEN)))
    }

    #[inline]
    pub fn word2(&self, a: u64, b: u64) -> u64 {
        mix64(self.word(a) ^ mix64(b.wrapping_mul(GOLDEN).wrapping_add(1)))
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&self, a: u64) -> f64 {
        to_unit(self.word(a))
    }

    #[inline]
    pub fn uniform2(&self, a: u64, b: u64) -> f64 {
        to_unit(self.word2(a, b))
    }

    /// Full generator for draws that need an unbounded number of uniforms.
    pub fn generator(&self, a: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.word(a))
    }
}

#[inline]
pub fn to_unit(w: u64) -> f64 {
    (w >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Seed for replicate `index` on stream `tag`, split from a master seed.
pub fn derive_seed(master: u64, index: u64, tag: StreamTag) -> u64 {
    StreamKey::new(master, tag).word(index)
}

/// Rolling hash of a tree path: child `i` of a vertex with hash `h`.
#[inline]
pub fn child_hash(parent: u64, child: u64) -> u64 {
    mix64(parent.rotate_left(17) ^ mix64(child.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub const ROOT_HASH: u64 = 0x243F_6A88_85A3_08D3;

pub fn path_hash(path: &[u32]) -> u64 {
    path.iter().fold(ROOT_HASH, |h, &c| child_hash(h, c as u64))
}
