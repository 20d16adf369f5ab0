//! Deterministic random streams for Monte Carlo trajectories.
//!
//! Every trajectory owns an independent ChaCha8 stream keyed by
//! `base_seed ⊕ index`, so any trajectory can be replayed in isolation and
//! results do not depend on how work is distributed across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn trajectory_seed(base_seed: u64, index: u64) -> u64 {
    base_seed ^ index
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The (r1, r2) pair consumed by one trajectory step, each uniform on [0, 1).
pub fn step_pair(rng: &mut Stream) -> (f64, f64) {
    let r1 = rng.gen::<f64>();
    let r2 = rng.gen::<f64>();
    (r1, r2)
}
