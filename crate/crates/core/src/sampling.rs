//! Seeded random probe paths for property tests and CLI checks.
//!
//! The standard generator draws piecewise-linear paths on a 32-node grid over
//! `[-4, 0]` with node values i.i.d. uniform in `[-2, 2]^d` and the leftmost
//! node forced to zero: rough enough to exercise both branches of every gauge
//! formula with substantial probability.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::path::{HistoryPath, TimedPath};

pub const STANDARD_NODES: usize = 32;
pub const STANDARD_SPAN: f64 = 4.0;
pub const STANDARD_AMPLITUDE: f64 = 2.0;

pub fn standard_path(rng: &mut impl Rng, dim: usize) -> HistoryPath {
    scaled_path(rng, dim, STANDARD_AMPLITUDE)
}

pub fn scaled_path(rng: &mut impl Rng, dim: usize, amplitude: f64) -> HistoryPath {
    let k = STANDARD_NODES;
    let mut nodes = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for j in 0..k {
        nodes.push(-STANDARD_SPAN * (k - 1 - j) as f64 / (k - 1) as f64);
        let v = if j == 0 {
            vec![0.0; dim]
        } else {
            (0..dim).map(|_| rng.gen_range(-amplitude..amplitude)).collect()
        };
        values.push(v);
    }
    HistoryPath::continuous(nodes, values).expect("generated grid is valid")
}

pub fn timed_path(rng: &mut impl Rng, dim: usize, t_max: f64) -> TimedPath {
    let t = rng.gen_range(0.0..t_max);
    TimedPath::new(t, standard_path(rng, dim))
}

/// A deterministic batch keyed by seed.
pub fn sample_paths(seed: u64, count: usize, dim: usize) -> Vec<HistoryPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| standard_path(&mut rng, dim)).collect()
}

pub fn sample_timed_paths(seed: u64, count: usize, dim: usize, t_max: f64) -> Vec<TimedPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| timed_path(&mut rng, dim, t_max)).collect()
}
