use crate::rng;
use crate::volume::VoxelGrid;
use rayon::prelude::*;

/// Samples per parallel work item. Fixed so the reduction tree, and hence
/// every bit of the result, is independent of the thread count.
const CHUNK: usize = 32;

/// Per-voxel mean and standard deviation of posterior-predictive samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub mean: VoxelGrid,
    pub std: VoxelGrid,
    pub n_samples: usize,
}

impl PosteriorSummary {
    /// Mean thresholded at `t`.
    pub fn mean_mask(&self, t: f32) -> VoxelGrid {
        self.mean.threshold(t)
    }

    /// `clamp(mean + k * std, 0, 1)`; `k = 1` and `k = -1` give the upper and
    /// lower uncertainty surfaces.
    pub fn shifted(&self, k: f32) -> VoxelGrid {
        let std = self.std.values();
        self.mean.map_clamped(|i, m| m + k * std[i])
    }
}

/// Mean and population std of `n_samples` vectors of length `len`, where
/// sample `s` is `draw(&mut stream(base, s))`. Runs chunks in parallel and
/// merges them in chunk order.
pub(crate) fn sample_moments<F>(len: usize, n_samples: usize, base: u64, draw: F) -> MomentAccumulator
where
    F: Fn(&mut rng::Rng) -> Vec<f64> + Sync,
{
    let partials: Vec<MomentAccumulator> = (0..n_samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = MomentAccumulator::new(len);
            for s in c * CHUNK..((c + 1) * CHUNK).min(n_samples) {
                acc.push(&draw(&mut rng::stream(base, s as u64)));
            }
            acc
        })
        .collect();
    partials.into_iter().fold(MomentAccumulator::new(len), MomentAccumulator::merge)
}

/// Streaming mean and population variance over equally sized vectors,
/// accumulated in a fixed order.
#[derive(Debug, Clone)]
pub(crate) struct MomentAccumulator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(len: usize) -> Self {
        Self { count: 0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    /// Welford update.
    pub fn push(&mut self, sample: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(sample) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
    }

    /// Combines two accumulators (Chan et al. pairwise update). Merging in a
    /// fixed order gives bit-identical results regardless of thread timing.
    pub fn merge(mut self, other: Self) -> Self {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
        self
    }

    /// `(mean, std)` with the population standard deviation
    /// `sqrt(sum((x - mean)^2) / n)`.
    pub fn finish(self) -> (Vec<f64>, Vec<f64>) {
        let n = self.count.max(1) as f64;
        let std = self.m2.iter().map(|&s| (s.max(0.0) / n).sqrt()).collect();
        (self.mean, std)
    }

    pub fn into_summary(self, dims: [usize; 3], spacing: [f32; 3]) -> PosteriorSummary {
        let n_samples = self.count;
        let (mean, std) = self.finish();
        let to_grid = |v: Vec<f64>| {
            VoxelGrid::probability(dims, spacing, v.into_iter().map(|x| x.clamp(0.0, 1.0) as f32).collect())
                .expect("moments of probabilities lie in [0, 1]")
        };
        PosteriorSummary { mean: to_grid(mean), std: to_grid(std), n_samples }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let samples = [[0.1, 0.9], [0.3, 0.2], [0.8, 0.4], [0.5, 0.5]];
        let mut acc = MomentAccumulator::new(2);
        for s in &samples {
            acc.push(s);
        }
        let (mean, std) = acc.finish();
        for k in 0..2 {
            let m: f64 = samples.iter().map(|s| s[k]).sum::<f64>() / 4.0;
            let v: f64 = samples.iter().map(|s| (s[k] - m).powi(2)).sum::<f64>() / 4.0;
            assert!((mean[k] - m).abs() < 1e-15);
            assert!((std[k] - v.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn merge_matches_sequential() {
        let samples: Vec<[f64; 2]> = (0..7).map(|i| [(i as f64 * 0.37).fract(), (i as f64 * 0.61).fract()]).collect();
        let mut all = MomentAccumulator::new(2);
        let mut a = MomentAccumulator::new(2);
        let mut b = MomentAccumulator::new(2);
        for (i, s) in samples.iter().enumerate() {
            all.push(s);
            if i < 3 { a.push(s) } else { b.push(s) }
        }
        let (m1, s1) = all.finish();
        let (m2, s2) = a.merge(b).finish();
        for k in 0..2 {
            assert!((m1[k] - m2[k]).abs() < 1e-14);
            assert!((s1[k] - s2[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn single_sample_has_zero_std() {
        let mut acc = MomentAccumulator::new(3);
        acc.push(&[0.2, 0.4, 0.6]);
        assert_eq!(acc.finish().1, vec![0.0; 3]);
    }
}
