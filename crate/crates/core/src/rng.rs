//! Counter-based random streams.
//!
//! A [`StreamFamily`] is a 256-bit ChaCha key. Individual streams are selected
//! by a 63-bit index (ChaCha's stream counter), so any stream can be produced
//! directly from `(seed, index)` without replaying the others. Families for
//! separate purposes are derived from a parent by a label, which uses the
//! upper half of the stream space and therefore never collides with indexed
//! streams.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Labels for derived stream families.
pub mod domain {
    pub const SUBORDINATOR: u64 = 1;
    pub const REPLICA: u64 = 2;
    pub const INITIAL: u64 = 3;
    pub const DYNAMICS: u64 = 4;
    pub const ENVIRONMENT: u64 = 5;
    pub const GAP_WALK: u64 = 6;
    pub const BOOTSTRAP: u64 = 7;
    pub const WALK: u64 = 8;
}

const INDEX_MASK: u64 = u64::MAX >> 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamFamily {
    key: [u8; 32],
}

impl StreamFamily {
    pub fn new(seed: u64) -> Self {
        Self {
            key: ChaCha8Rng::seed_from_u64(seed).get_seed(),
        }
    }

    /// Child family keyed by `label`.
    pub fn derive(&self, label: u64) -> Self {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(!INDEX_MASK | (label & INDEX_MASK));
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        Self { key }
    }

    /// The stream with the given index (only the low 63 bits are used).
    pub fn stream(&self, index: u64) -> Stream {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index & INDEX_MASK);
        Stream(rng)
    }
}

/// Maps a signed index onto the unsigned stream space injectively.
pub fn zigzag(index: i64) -> u64 {
    ((index << 1) ^ (index >> 63)) as u64
}

#[derive(Clone, Debug)]
pub struct Stream(ChaCha8Rng);

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
}

/// Uniform draw on the open interval (0, 1).
#[inline]
pub fn uniform_open<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard exponential draw (mean 1).
#[inline]
pub fn exponential<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    -libm::log(uniform_open(rng))
}
