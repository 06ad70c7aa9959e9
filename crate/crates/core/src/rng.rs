//! Seeded substreams.
//!
//! Every random decision in the crate is drawn from a ChaCha stream whose
//! seed is a stable hash of a base seed and a tuple of labels, so a given
//! (seed, session, round, image) always yields the same draws no matter how
//! many other sessions run concurrently.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Incremental FNV-1a hasher with a splitmix finalizer.
#[derive(Clone, Debug)]
pub struct StreamKey {
    state: u64,
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        let mut key = StreamKey { state: FNV_OFFSET };
        key.bytes(&seed.to_le_bytes());
        key
    }

    fn bytes(&mut self, data: &[u8]) {
        for b in data {
            self.state ^= u64::from(*b);
            self.state = self.state.wrapping_mul(FNV_PRIME);
        }
        // field separator so ("ab","c") != ("a","bc")
        self.state ^= 0xff;
        self.state = self.state.wrapping_mul(FNV_PRIME);
    }

    pub fn str(mut self, s: &str) -> Self {
        self.bytes(s.as_bytes());
        self
    }

    pub fn num(mut self, n: u64) -> Self {
        self.bytes(&n.to_le_bytes());
        self
    }

    pub fn finish(&self) -> u64 {
        splitmix(self.state)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.finish())
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the `index`-th item of a batch derived from `seed`.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    StreamKey::new(seed).str(label).num(index).finish()
}
