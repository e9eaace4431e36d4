//! Seeded randomness.
//!
//! Every random quantity in the crate is drawn from [`Rng`], a ChaCha8
//! stream seeded from an explicit 64-bit seed. Independent sub-tasks
//! (bootstrap rounds, benchmark cells) get their own stream id so results
//! do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The repo-wide generator.
pub type Rng = ChaCha8Rng;

/// Name and version of the generator, written into manifests.
pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.9";

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A generator for sub-task `stream` that does not overlap the parent seed's
/// main stream.
pub fn substream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.wrapping_add(1));
    rng
}
