//! Seed derivation.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by a
//! seed derived from one base seed and a path of tags, e.g.
//! `derive_seed(base, &[streams::FOLD, fold])`. ChaCha is counter based, so a
//! given (seed, draw index) always yields the same value.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type DetRng = ChaCha8Rng;

/// Tags used as the first element of a derivation path.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const FOLD: u64 = 4;
    pub const VALIDATION: u64 = 5;
    pub const PARTITION: u64 = 6;
    pub const SWEEP: u64 = 7;
    pub const SYNTH: u64 = 8;
}

pub fn seeded(seed: u64) -> DetRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(base, |seed, &tag| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(tag);
        rng.next_u64()
    })
}

pub fn derived(base: u64, path: &[u64]) -> DetRng {
    seeded(derive_seed(base, path))
}

/// Normal draw with standard deviation `std`, redrawn until within two
/// standard deviations of zero.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}
