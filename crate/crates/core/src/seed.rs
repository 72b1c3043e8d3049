//! Seed derivation.
//!
//! Every stochastic operation takes an explicit 64-bit seed. Experiments hold
//! a single root seed and derive children with a counter scheme:
//!
//! ```text
//! child(parent, i) = splitmix64(parent ^ splitmix64(i + 0x9E3779B97F4A7C15))
//! ```
//!
//! Children of children are derived the same way, so a path such as
//! `child(child(root, world), TRAIN)` names one stream unambiguously.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random generator used throughout the crate.
pub type Rng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn child(parent: u64, counter: u64) -> u64 {
    splitmix64(parent ^ splitmix64(counter.wrapping_add(GOLDEN_GAMMA)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream labels used by the experiment drivers.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const DATA: u64 = 10;
    pub const TARGET_DATA: u64 = 11;
    pub const MIXTURE: u64 = 12;
    pub const TRAIN: u64 = 20;
    pub const UPDATE: u64 = 21;
    pub const CHALLENGE: u64 = 30;
    pub const GUESS: u64 = 31;
    pub const SHADOW: u64 = 40;
    pub const WORLD: u64 = 100;
    pub const CALIBRATION: u64 = 101;
    pub const SWEEP: u64 = 200;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn children_differ_and_are_stable() {
        let a = child(7, 0);
        let b = child(7, 1);
        assert_ne!(a, b);
        assert_eq!(a, child(7, 0));
        assert_ne!(child(a, 0), child(b, 0));
    }
}
