//! Seeded random streams.
//!
//! A stream is addressed by `(master_seed, stream_index)`. The ChaCha8 key is
//! derived from the master seed by SplitMix64 expansion and the index selects
//! the ChaCha stream, so distinct pairs give independent sequences and the
//! same pair always reproduces the same sequence. The generator is fixed for
//! this release: changing it changes every seeded output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    /// A sub-stream of this one. Children of distinct parents or with distinct
    /// indices never share a `(seed, index)` address.
    pub fn child(&self, index: u64) -> RngStream {
        let mut s = self.master_seed ^ self.stream_index.rotate_left(32);
        let a = splitmix64(&mut s);
        let b = splitmix64(&mut s);
        RngStream::new(a ^ b.rotate_left(17) ^ self.stream_index, index)
    }

    /// Materialize the generator.
    pub fn generator(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = self.master_seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Draw a standard normal.
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Vector of i.i.d. standard normals.
pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, len: usize) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_fn(len, |_, _| normal(rng))
}
