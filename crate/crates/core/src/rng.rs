//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! `(seed, purpose)` pair and positioned on a 64-bit stream index, so a
//! sample depends only on its logical coordinates and never on which worker
//! produced it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

/// Purposes get disjoint key spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Wiener = 1,
    Bridge = 2,
    FbmExact = 3,
    Outer = 4,
    Replica = 5,
    Contraction = 6,
    FastNoise = 7,
    SlowNoise = 8,
    Direct = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a seed with a key so that nearby seeds give unrelated generators.
pub fn derive_seed(seed: u64, key: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(key.wrapping_add(0xA5A5_A5A5)))
}

/// Generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A seed together with the purpose-keyed substreams hanging off it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSpace {
    seed: u64,
}

impl SeedSpace {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A child seed space, e.g. one per outer sample.
    pub fn child(&self, purpose: Purpose, index: u64) -> SeedSpace {
        SeedSpace { seed: derive_seed(derive_seed(self.seed, purpose as u64), index) }
    }

    /// `(seed, stream)` pair for a leaf generator.
    pub fn coords(&self, purpose: Purpose, index: u64) -> (u64, u64) {
        (derive_seed(self.seed, purpose as u64), index)
    }

    pub fn rng(&self, purpose: Purpose, index: u64) -> StreamRng {
        let (s, k) = self.coords(purpose, index);
        stream_rng(s, k)
    }
}

/// Fill `out` with i.i.d. `N(0, var)` draws.
pub fn fill_normal(rng: &mut StreamRng, var: f64, out: &mut [f64]) {
    let sd = var.sqrt();
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = sd * z;
    }
}

pub fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}
