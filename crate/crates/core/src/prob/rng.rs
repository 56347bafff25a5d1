//! Named, reproducible random streams.
//!
//! Every consumer (a subset-simulation level, one Markov chain, the auxiliary
//! variable of a likelihood estimate, ...) draws from its own ChaCha stream
//! keyed by `(seed, label, index)`. Results therefore do not depend on the
//! order in which work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Opens the stream `(label, index)` of the generator seeded with `seed`.
pub fn stream(seed: u64, label: &str, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(splitmix64(fnv1a(label) ^ splitmix64(index)));
    rng
}

/// Derives a child seed, used when a whole sub-computation needs a fresh
/// family of streams (e.g. one subset-simulation run per sample size).
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(fnv1a(label).wrapping_add(index)))
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
