//! Named, seed-derived random substreams. All stochastic choices in a run
//! flow from the scenario seed through these streams; there is no global RNG.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic substream derived from (seed, label). Streams with
/// distinct labels are independent regardless of draw order.
pub fn substream(seed: u64, label: &str) -> ChaCha8Rng {
    let mixed = seed ^ fnv1a(label.as_bytes()).rotate_left(17);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Substream with an index, e.g. one stream per background vehicle.
pub fn substream_indexed(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mixed = seed
        ^ fnv1a(label.as_bytes()).rotate_left(17)
        ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    ChaCha8Rng::seed_from_u64(mixed)
}
