//! Named random sub-streams derived from a single seed.
//!
//! Each component (simulation noise, weight init, dropout masks) draws from
//! its own ChaCha stream so that changing how much randomness one component
//! consumes never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SIM: &str = "sim";
pub const INIT: &str = "init";
pub const DROPOUT: &str = "dropout";

pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}
