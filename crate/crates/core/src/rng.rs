//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha8 generator keyed by a 64-bit
//! seed and a stream id, so the mixing matrices, the ground truth, the
//! observations and the solver initialization are reproducible independently
//! of one another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Mixing = 0,
    Truth = 1,
    Observations = 2,
    SolverInit = 3,
    Rip = 4,
    Analysis = 5,
}

/// Generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed of one trial inside a sweep: `base + trial + 10^6 * grid_index`.
pub fn trial_seed(base: u64, trial: usize, grid_index: usize) -> u64 {
    base.wrapping_add(trial as u64)
        .wrapping_add(1_000_000u64.wrapping_mul(grid_index as u64))
}
