use super::{EvalError, Result};
use crate::volume::{PointCloud, VoxelGrid};
use serde::{Deserialize, Serialize};

/// Posterior std on the truth's surface shell, split by distance to the
/// acquired points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationStats {
    /// Mean std over shell voxels within `radius` of some acquired point.
    pub near_mean: f64,
    /// Mean std over the remaining shell voxels.
    pub far_mean: f64,
    pub near_count: usize,
    pub far_count: usize,
}

/// Compares posterior std near the acquired points with std elsewhere on the
/// truth's shell (foreground voxels with a background 6-neighbour).
pub fn uncertainty_localization(
    truth: &VoxelGrid,
    points: &PointCloud,
    std: &VoxelGrid,
    radius: f64,
) -> Result<LocalizationStats> {
    if truth.dims() != std.dims() {
        return Err(EvalError::DimsMismatch(truth.dims(), std.dims()));
    }
    let r2 = radius * radius;
    let (mut near, mut far) = ((0.0, 0usize), (0.0, 0usize));
    for i in truth.surface_shell() {
        let c = truth.coords(i).map(|v| v as f64);
        let close = points.points.iter().any(|p| (0..3).map(|k| (p[k] - c[k]).powi(2)).sum::<f64>() <= r2);
        let bucket = if close { &mut near } else { &mut far };
        bucket.0 += f64::from(std.values()[i]);
        bucket.1 += 1;
    }
    if near.1 == 0 || far.1 == 0 {
        return Err(EvalError::InvalidConfig(format!(
            "need shell voxels both near and far from the points (near {}, far {})",
            near.1, far.1
        )));
    }
    Ok(LocalizationStats {
        near_mean: near.0 / near.1 as f64,
        far_mean: far.0 / far.1 as f64,
        near_count: near.1,
        far_count: far.1,
    })
}
