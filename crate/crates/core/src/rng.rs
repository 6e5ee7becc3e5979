//! Counter-based random streams.
//!
//! Every unit of stochastic work (a chain, a disorder draw, an optimizer
//! restart) gets its own ChaCha stream addressed by `(seed, domain, index)`,
//! so results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates stream families that share a user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamDomain {
    Couplings = 1,
    Signal = 2,
    Chain = 3,
    Restart = 4,
    ChannelNoise = 5,
}

pub fn stream(seed: u64, domain: StreamDomain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 56) ^ index);
    rng
}
