//! Seeded random streams.
//!
//! Every stochastic step draws from its own ChaCha stream keyed by
//! `(seed, stream)`, so results do not depend on which thread runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
