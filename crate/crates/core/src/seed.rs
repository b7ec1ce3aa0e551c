//! Deterministic seed derivation.
//!
//! Every Monte Carlo run is keyed by a path of labels (experiment, point
//! index, rate index, blocking mode, ...) hashed together with the master
//! seed. Within a run, trials are grouped into fixed-size batches and batch
//! `k` reads ChaCha8 stream `k` of the run seed, so results never depend on
//! how batches are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Trials per rng stream.
pub const BATCH_SIZE: u64 = 4096;

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a hash of a textual label.
pub fn label(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// A position in the seed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedPath(u64);

impl SeedPath {
    pub fn root(master: u64) -> Self {
        SeedPath(mix64(master))
    }

    pub fn child(self, key: u64) -> Self {
        SeedPath(mix64(self.0 ^ mix64(key)))
    }

    pub fn named(self, name: &str) -> Self {
        self.child(label(name))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// The rng for batch `batch` of the run rooted here.
    pub fn batch_rng(self, batch: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(batch);
        rng
    }
}
