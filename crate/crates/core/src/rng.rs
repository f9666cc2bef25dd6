//! Seeded generators and seed derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numerics::{Real, Tensor};

pub type Rng = ChaCha8Rng;

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for a `(parent, tag)` pair; distinct tags give unrelated streams.
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    mix64(mix64(parent) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// `[rows, cols]` tensor of standard-normal draws.
pub fn normal_tensor<T: Real>(rng: &mut Rng, rows: usize, cols: usize) -> Tensor<T> {
    Tensor::from_fn(&[rows, cols], |_| {
        let z: f64 = StandardNormal.sample(rng);
        T::of(z)
    })
}
