//! Seeded random substreams.
//!
//! Every consumer of randomness draws from its own ChaCha stream derived
//! from the root seed, a subsystem tag and an index, so adding a node or a
//! subsystem never shifts the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Subsystems that own independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Placement = 1,
    Mobility = 2,
    Channel = 3,
    Protocol = 4,
    Traffic = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the 64-bit seed of substream `(stream, index)` under `root`.
pub fn derive_seed(root: u64, stream: Stream, index: u64) -> u64 {
    let a = splitmix64(root ^ splitmix64(stream as u64));
    splitmix64(a ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

pub fn substream(root: u64, stream: Stream, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(root, stream, index))
}
