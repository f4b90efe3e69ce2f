//! Shared inputs for the benchmarks: a phantom corpus at the experiment
//! resolution and acquisitions on it.

use atriamap_core::eval::{simulate_acquisition, synthetic_corpus, EamSimConfig};
use atriamap_core::{PointCloud, VoxelGrid};

pub const DIMS: [usize; 3] = [20, 20, 20];

/// Fifteen training phantoms and one held-out test phantom.
pub fn corpus() -> (Vec<VoxelGrid>, VoxelGrid) {
    let (train, test) = synthetic_corpus(42, 15, 1, DIMS).expect("default phantoms fit the grid");
    (train.into_iter().map(|g| g.grid).collect(), test.into_iter().next().expect("one test volume").grid)
}

/// Simulated acquisition of `n` surface vertices.
pub fn acquisition(truth: &VoxelGrid, n: usize) -> PointCloud {
    simulate_acquisition(truth, &EamSimConfig { n_points: n, threshold: 1.0, seed: 7 }).expect("phantom has a surface")
}
