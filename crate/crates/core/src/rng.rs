//! Keyed random streams.
//!
//! A [`StreamSeed`] is a 64-bit key; `child(i)` derives an independent key
//! with SplitMix64 mixing, and `rng()` expands a key into a ChaCha
//! generator. Work split by replication or by bootstrap component gets its
//! own child key, so results do not depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamSeed(u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl StreamSeed {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn key(self) -> u64 {
        self.0
    }

    pub fn child(self, index: u64) -> Self {
        Self(splitmix64(splitmix64(self.0) ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d))))
    }

    pub fn rng(self) -> StreamRng {
        StreamRng::seed_from_u64(self.0)
    }
}
