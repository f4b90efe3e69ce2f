use super::{Result, VolumeError, VoxelGrid};

/// Crop window `(start, extent)` per axis: the foreground bounding box plus a
/// one-voxel margin, widened to at least `target` voxels around the box
/// centre and shifted to stay inside the grid.
pub fn crop_window(grid: &VoxelGrid, target: [usize; 3]) -> Result<([usize; 3], [usize; 3])> {
    let dims = grid.dims();
    if (0..3).any(|i| target[i] == 0 || target[i] > dims[i]) {
        return Err(VolumeError::TargetExceedsInput { target, available: dims });
    }
    let (lo, hi) = grid.foreground_bounds().ok_or(VolumeError::EmptyVolume)?;
    let mut start = [0; 3];
    let mut extent = [0; 3];
    for i in 0..3 {
        let a = lo[i].saturating_sub(1);
        let b = (hi[i] + 1).min(dims[i] - 1);
        let len = (b - a + 1).max(target[i]);
        // centre the widened window on the box, then clamp into the grid
        let grow = len - (b - a + 1);
        let s = a.saturating_sub(grow / 2).min(dims[i] - len);
        start[i] = s;
        extent[i] = len;
    }
    Ok((start, extent))
}

/// Crops every grid to its foreground and resamples it to `target` dims.
///
/// Binary grids are downsampled by majority vote over the input cells that
/// fall into each output cell, with ties going to foreground; probability
/// grids are averaged.
pub fn prepare_dataset(grids: &[VoxelGrid], target: [usize; 3]) -> Result<Vec<VoxelGrid>> {
    grids.iter().map(|g| prepare_one(g, target)).collect()
}

fn prepare_one(grid: &VoxelGrid, target: [usize; 3]) -> Result<VoxelGrid> {
    let (start, extent) = crop_window(grid, target)?;
    let bounds = |axis: usize, j: usize| {
        let l = extent[axis];
        let t = target[axis];
        (start[axis] + j * l / t, start[axis] + (j + 1) * l / t)
    };
    let spacing: [f32; 3] =
        std::array::from_fn(|i| grid.spacing()[i] * extent[i] as f32 / target[i] as f32);
    let mut values = Vec::with_capacity(target.iter().product());
    for z in 0..target[2] {
        let (z0, z1) = bounds(2, z);
        for y in 0..target[1] {
            let (y0, y1) = bounds(1, y);
            for x in 0..target[0] {
                let (x0, x1) = bounds(0, x);
                let mut sum = 0.0f64;
                let mut count = 0usize;
                for zz in z0..z1 {
                    for yy in y0..y1 {
                        for xx in x0..x1 {
                            sum += grid.get([xx, yy, zz]) as f64;
                            count += 1;
                        }
                    }
                }
                let v = if grid.is_binary() {
                    if 2.0 * sum >= count as f64 { 1.0 } else { 0.0 }
                } else {
                    (sum / count as f64) as f32
                };
                values.push(v);
            }
        }
    }
    if grid.is_binary() {
        VoxelGrid::binary(target, spacing, values)
    } else {
        VoxelGrid::probability(target, spacing, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn already_at_target_is_unchanged() {
        let g = VoxelGrid::from_fn([20, 20, 20], [1.0; 3], |c| c.iter().all(|&v| (3..17).contains(&v)));
        let out = prepare_dataset(std::slice::from_ref(&g), [20, 20, 20]).unwrap();
        assert_eq!(out[0], g);
    }

    #[test]
    fn empty_volume_rejected() {
        let g = VoxelGrid::zeros([8, 8, 8], [1.0; 3]);
        assert!(matches!(prepare_dataset(&[g], [4, 4, 4]), Err(VolumeError::EmptyVolume)));
    }

    #[test]
    fn target_larger_than_input_rejected() {
        let g = VoxelGrid::from_fn([8, 8, 8], [1.0; 3], |c| c == [4, 4, 4]);
        assert!(matches!(
            prepare_dataset(&[g], [10, 4, 4]),
            Err(VolumeError::TargetExceedsInput { .. })
        ));
    }

    #[test]
    fn output_dims_match_target() {
        let g = VoxelGrid::from_fn([30, 25, 40], [1.0; 3], |c| c[0] > 3 && c[1] < 20 && c[2] % 3 == 0);
        for target in [[10, 10, 10], [20, 5, 7], [30, 25, 40]] {
            let out = prepare_dataset(std::slice::from_ref(&g), target).unwrap();
            assert_eq!(out[0].dims(), target);
            assert!(out[0].is_binary());
        }
    }
}
