//! Deterministic random-number substreams.
//!
//! Every random draw in a run is taken from a generator keyed by
//! `(seed, sweep, stream, index)`, so results do not depend on how work is
//! scheduled across threads, and a resumed run reproduces the exact draws of
//! an uninterrupted one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

/// Purpose tag separating otherwise identical keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Coordinator = 2,
    Individual = 3,
    Theta = 4,
    Simulate = 5,
    SimulateSetup = 6,
    Pilot = 7,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn substream(seed: u64, sweep: u64, stream: Stream, index: u64) -> ChainRng {
    let words = [
        splitmix64(seed),
        splitmix64(seed ^ splitmix64(sweep.wrapping_add(0x51))),
        splitmix64((stream as u64).wrapping_mul(0xA24B_AED4_963E_E407) ^ splitmix64(index)),
        splitmix64(seed.rotate_left(17) ^ sweep.rotate_left(41) ^ index.rotate_left(7)),
    ];
    let mut key = [0u8; 32];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Seed for the `index`-th pilot chain of a run seeded with `seed`.
pub fn pilot_seed(seed: u64, index: u64) -> u64 {
    use rand::Rng;
    substream(seed, 0, Stream::Pilot, index).random()
}
