//! Seeded random streams.
//!
//! A master seed is split into named, independent ChaCha streams so that
//! adding a consumer (say, one more sampling chain) never perturbs the draws
//! seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// FNV-1a over arbitrary bytes; stable across platforms and releases.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A stream derived from `seed` and a textual name.
pub fn named_stream(seed: u64, name: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stable_hash(name.as_bytes()));
    rng
}

/// A stream derived from `seed`, a name and an integer index.
pub fn indexed_stream(seed: u64, name: &str, index: u64) -> Rng {
    let mut bytes = name.as_bytes().to_vec();
    bytes.push(0);
    bytes.extend_from_slice(&index.to_le_bytes());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stable_hash(&bytes));
    rng
}

/// Stream keyed by a segment identity; independent of evaluation order.
pub fn segment_stream(seed: u64, utterance: &str, start: usize, end: usize) -> Rng {
    let mut bytes = b"segment\0".to_vec();
    bytes.extend_from_slice(utterance.as_bytes());
    bytes.push(0);
    bytes.extend_from_slice(&(start as u64).to_le_bytes());
    bytes.extend_from_slice(&(end as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stable_hash(&bytes));
    rng
}
