//! Reproducible per-replica random streams.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Generator behind every stream.
pub type StreamRng = Xoshiro256PlusPlus;

/// Stream identifiers separating independent uses of the same `(seed, replica)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Signal = 1,
    Initial = 2,
    Samples = 3,
}

/// Generator keyed by `(seed, replica, purpose)`; identical keys give identical streams.
pub fn stream(seed: u64, replica: u64, purpose: Purpose) -> StreamRng {
    let key = splitmix(splitmix(seed ^ splitmix(replica)) ^ splitmix(purpose as u64).rotate_left(17));
    StreamRng::seed_from_u64(key)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
