//! Deterministic seed derivation.
//!
//! Every randomized routine receives an explicit `u64` seed. Child seeds are
//! derived by mixing the parent with a stream index through SplitMix64, so the
//! seed a sub-task sees never depends on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `index` of `parent`.
pub fn derive(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Child seed keyed by a label, for named sub-streams ("centers_f", "folds", ...).
pub fn derive_named(parent: u64, label: &str) -> u64 {
    // FNV-1a over the label bytes
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01B3);
    }
    derive(parent, h)
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
