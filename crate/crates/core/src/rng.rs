//! Indexable random streams.
//!
//! A [`Stream`] is a ChaCha key derived from a seed and a path of indices
//! (replication, draw, ...). Children are derived without consuming any state,
//! so draw `b` of replication `r` yields the same numbers no matter which
//! worker evaluates it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stream {
    key: [u64; 4],
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        let a = splitmix(seed);
        let b = splitmix(a ^ 0x5EED);
        let c = splitmix(b);
        let d = splitmix(c);
        Self { key: [a, b, c, d] }
    }

    /// Derives the stream for child `index`. Distinct indices give unrelated keys.
    pub fn child(&self, index: u64) -> Self {
        let mut key = [0u64; 4];
        let mut acc = splitmix(index ^ 0xD1B5_4A32_D192_ED03);
        for (slot, k) in key.iter_mut().zip(self.key) {
            acc = splitmix(acc ^ k);
            *slot = acc;
        }
        Self { key }
    }

    /// Labelled child, for separating independent uses under the same parent.
    pub fn domain(&self, label: &str) -> Self {
        let h = label
            .bytes()
            .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01B3));
        self.child(h)
    }

    /// A 64-bit seed summarizing this stream, for APIs that take a plain seed.
    pub fn seed(&self) -> u64 {
        self.key[0]
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut seed = [0u8; 32];
        for (chunk, k) in seed.chunks_exact_mut(8).zip(self.key) {
            chunk.copy_from_slice(&k.to_le_bytes());
        }
        ChaCha12Rng::from_seed(seed)
    }
}
