//! Seed derivation. Every random stream in the crate is a ChaCha generator
//! keyed by a labeled hash of the run seed, so each subsystem draws from an
//! independent, reproducible stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `seed`, a stream label and any number of integer coordinates into a
/// 64-bit seed. Stable across platforms and releases.
pub fn derive_seed(seed: u64, label: &str, parts: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    let mut acc = splitmix64(seed ^ h);
    for &p in parts {
        acc = splitmix64(acc ^ splitmix64(p));
    }
    acc
}

pub fn stream(seed: u64, label: &str, parts: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, label, parts))
}
