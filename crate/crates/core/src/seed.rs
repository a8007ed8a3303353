//! Deterministic child-seed derivation.
//!
//! Every stochastic component draws from its own stream seeded by
//! `derive(master, component, index)`, so results do not depend on how work
//! is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `(master, component, index)`. Stable across platforms and releases.
pub fn derive(master: u64, component: &str, index: u64) -> u64 {
    let mut h = FNV_OFFSET;
    for b in component.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix(splitmix(master ^ h).wrapping_add(splitmix(index)))
}

pub fn rng_from(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn child_rng(master: u64, component: &str, index: u64) -> Rng {
    rng_from(derive(master, component, index))
}
