//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator seeded with the experiment's master
//! seed and selected by `stream = (domain << 32) | client`. Domains are
//! disjoint, so data generation, batch sampling and initialization never
//! share draws, and a client's stream does not depend on how many other
//! clients exist or the order they are stepped in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    /// Per-client task parameters (true weights, feature scales).
    Task = 1,
    /// Training samples.
    Data = 2,
    /// Mini-batch index draws.
    Batch = 3,
    /// Initial client iterates.
    Init = 4,
    /// Held-out evaluation samples.
    Test = 5,
}

pub fn stream(seed: u64, domain: Domain, client: u32) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 32) | client as u64);
    rng
}
