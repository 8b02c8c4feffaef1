//! Seed derivation.
//!
//! Every run has one master seed. Components never draw from the master
//! stream directly; each derives its own seed from the master and a fixed
//! label (`"balance"`, `"split"`, `"model"`, ...) and ensemble members derive
//! theirs from the model seed and their index. The derivation is SplitMix64
//! applied to the master seed xor an FNV-1a hash of the label.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn derive(master: u64, label: &str) -> u64 {
    splitmix64(master ^ fnv1a(label))
}

pub fn derive_indexed(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(derive(master, label) ^ splitmix64(index))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
