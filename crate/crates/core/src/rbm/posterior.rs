use super::{bernoulli, RbmError, RbmModel, Result};
use crate::posterior::{sample_moments, PosteriorSummary};
use crate::rng;
use crate::volume::VoxelGrid;
use rand::RngCore;

/// Posterior-predictive reconstruction from a conditioning grid.
///
/// Each sample draws `h_s ~ Bernoulli(P(h | v_in))` and contributes the
/// visible probabilities `P(v | h_s)`. Returns their per-voxel mean and
/// population standard deviation. Sample `s` draws from stream `s` of a seed
/// taken from `rng`.
pub fn posterior_predictive(
    v_in: &VoxelGrid,
    model: &RbmModel,
    n_samples: usize,
    rng: &mut impl RngCore,
) -> Result<PosteriorSummary> {
    if v_in.dims() != model.dims() {
        return Err(RbmError::DimsMismatch { index: 0, expected: model.dims(), actual: v_in.dims() });
    }
    if n_samples == 0 {
        return Err(RbmError::InvalidConfig("n_samples must be >= 1".into()));
    }
    let base = rng::child_seed(rng);
    let ph = model.hidden_probs(&v_in.to_f64())?;
    let ph = ph.as_slice().expect("contiguous");
    let acc = sample_moments(model.n_visible(), n_samples, base, |rng| {
        let h = bernoulli(ph, rng);
        model.visible_probs(&h).expect("hidden length matches model").to_vec()
    });
    Ok(acc.into_summary(model.dims(), v_in.spacing()))
}

/// Hidden unit `j`'s incoming weights as a grid for display.
///
/// The `ceil(m * prune_fraction)` weights of smallest magnitude (ties by
/// voxel index) are zeroed, then magnitudes are min-max scaled to [0, 1]. A
/// constant result maps to 0.5 everywhere.
pub fn export_weights(model: &RbmModel, j: usize, prune_fraction: f64) -> Result<VoxelGrid> {
    if j >= model.n_hidden() {
        return Err(RbmError::IndexOutOfRange { index: j, n: model.n_hidden() });
    }
    if !(0.0..1.0).contains(&prune_fraction) {
        return Err(RbmError::InvalidConfig(format!("prune_fraction must be in [0, 1), got {prune_fraction}")));
    }
    let mut mag: Vec<f64> = model.weights.column(j).iter().map(|w| w.abs()).collect();
    let m = mag.len();
    let n_prune = ((m as f64) * prune_fraction).ceil() as usize;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| mag[a].total_cmp(&mag[b]).then(a.cmp(&b)));
    for &i in &order[..n_prune.min(m)] {
        mag[i] = 0.0;
    }
    let lo = mag.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values = if hi > lo {
        mag.iter().map(|&x| ((x - lo) / (hi - lo)) as f32).collect()
    } else {
        vec![0.5; m]
    };
    Ok(VoxelGrid::probability(model.dims(), [1.0; 3], values).expect("values in [0, 1]"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};

    fn model(scale: f64) -> RbmModel {
        // Integer weights with half-integer biases keep every activation at
        // least `scale / 2` away from zero.
        let w = Array2::from_shape_fn((8, 4), |(i, j)| scale * (((i * 7 + j * 3) % 5) as f64 - 2.0));
        let b = Array1::from_shape_fn(8, |i| scale * ((i % 3) as f64 - 0.5));
        RbmModel::from_parts([2, 2, 2], w, b, Array1::from_elem(4, scale * 0.5)).unwrap()
    }

    fn input() -> VoxelGrid {
        VoxelGrid::binary([2, 2, 2], [1.0; 3], vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn single_sample_has_zero_std() {
        let s = posterior_predictive(&input(), &model(0.3), 1, &mut rng::stream(0, 0)).unwrap();
        assert!(s.std.values().iter().all(|&x| x == 0.0));
        assert_eq!(s.n_samples, 1);
    }

    #[test]
    fn saturated_model_is_deterministic() {
        let s = posterior_predictive(&input(), &model(50.0), 200, &mut rng::stream(0, 0)).unwrap();
        assert!(s.std.values().iter().all(|&x| x <= 1e-6));
    }

    #[test]
    fn bounds_and_reproducibility() {
        let a = posterior_predictive(&input(), &model(0.3), 100, &mut rng::stream(4, 0)).unwrap();
        let b = posterior_predictive(&input(), &model(0.3), 100, &mut rng::stream(4, 0)).unwrap();
        assert_eq!(a, b);
        assert!(a.mean.values().iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(a.std.values().iter().all(|&x| (0.0..=0.5).contains(&x)));
        assert!(a.std.values().iter().any(|&x| x > 0.0));
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                posterior_predictive(&input(), &model(0.3), 150, &mut rng::stream(8, 0)).unwrap()
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn rejects_bad_arguments() {
        let small = VoxelGrid::zeros([2, 2, 1], [1.0; 3]);
        assert!(posterior_predictive(&small, &model(0.3), 4, &mut rng::stream(0, 0)).is_err());
        assert!(posterior_predictive(&input(), &model(0.3), 0, &mut rng::stream(0, 0)).is_err());
    }

    #[test]
    fn export_weights_pruning() {
        let m = model(0.3);
        let full = export_weights(&m, 1, 0.0).unwrap();
        let v = full.values();
        assert!(v.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(v.contains(&0.0) && v.contains(&1.0));

        let mut m = RbmModel::zeros([7, 1, 1], 2).unwrap();
        for i in 0..7 {
            m.weights[[i, 0]] = [0.3, -0.1, 0.1, 0.9, -0.5, 0.2, 0.4][i];
        }
        let half = export_weights(&m, 0, 0.5).unwrap();
        let zeros: Vec<usize> = (0..7).filter(|&i| half.values()[i] == 0.0).collect();
        // ceil(3.5) = 4 zeroed; the tie between |-0.1| and |0.1| is irrelevant
        // since both are pruned along with 0.2 and 0.3.
        assert_eq!(zeros, vec![0, 1, 2, 5]);
        assert_eq!(half.values()[3], 1.0);

        assert!(export_weights(&m, 1, 0.0).unwrap().values().iter().all(|&x| x == 0.5));
        assert!(matches!(export_weights(&m, 2, 0.0), Err(RbmError::IndexOutOfRange { index: 2, n: 2 })));
        assert!(export_weights(&m, 0, 1.0).is_err());
    }

    #[test]
    fn export_weights_tie_break_by_index() {
        let mut m = RbmModel::zeros([4, 1, 1], 1).unwrap();
        m.weights.column_mut(0).assign(&ndarray::array![0.5, -0.5, 0.5, 1.0]);
        let g = export_weights(&m, 0, 0.25).unwrap();
        assert_eq!(g.values(), &[0.0, 0.5, 0.5, 1.0]);
    }
}
