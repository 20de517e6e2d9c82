//! Seeded inputs for the benchmarks.

use dpvis_core::layout::Point;
use dpvis_core::patterns::StateSequence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` collapsed-looking sequences over `alphabet` states.
pub fn sequences(n: usize, alphabet: usize, max_len: usize, seed: u64) -> Vec<StateSequence> {
    let mut rng = rng(seed);
    (0..n)
        .map(|i| {
            let len = rng.random_range(1..=max_len);
            StateSequence {
                subject_id: format!("S{i:05}"),
                states: (0..len).map(|_| rng.random_range(0..alphabet)).collect(),
            }
        })
        .collect()
}

/// `(x, lane)` dots with ages spread over 20 years.
pub fn dots(n: usize, lanes: usize, seed: u64) -> Vec<(f64, usize)> {
    let mut rng = rng(seed);
    (0..n)
        .map(|_| (rng.random_range(0.0..240.0), rng.random_range(0..lanes)))
        .collect()
}

/// Monotone-in-x trajectories hopping between a few lanes.
pub fn polylines(n: usize, seed: u64) -> Vec<Vec<Point>> {
    let mut rng = rng(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(2..12);
            let mut x = rng.random_range(0.0..24.0);
            (0..len)
                .map(|_| {
                    x += rng.random_range(1.0..12.0);
                    [x, rng.random_range(0..5) as f64 * 4.0 + rng.random_range(-1.0..1.0)]
                })
                .collect()
        })
        .collect()
}
