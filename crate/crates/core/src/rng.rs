//! Seed derivation for independent random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by the
//! master seed and selected by a 64-bit stream id, so streams for distinct
//! (replica, factor) pairs never overlap.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Stream ids are laid out as `domain << 48 | replica << 16 | slot`.
pub fn stream_id(domain: u16, replica: u32, slot: u16) -> u64 {
    (u64::from(domain) << 48) | (u64::from(replica) << 16) | u64::from(slot)
}

pub fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub mod domain {
    pub const FACTOR: u16 = 1;
    pub const WISHART: u16 = 2;
    pub const CONCENTRATION: u16 = 3;
    pub const TEST_TENSOR: u16 = 4;
    pub const TENSOR_CHECK: u16 = 5;
}
