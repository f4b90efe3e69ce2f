//! Synthetic left-atrium phantoms: an ellipsoidal body with cylindrical
//! pulmonary veins running out to the left and right grid faces.

use super::{Result, VolumeError, VoxelGrid};
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub seed: u64,
    /// Body semi-axes in voxels, before jitter.
    pub semi_axes: [f64; 3],
    /// Inclusive range of vein radii in voxels.
    pub vein_radius: [f64; 2],
    pub vein_count: usize,
    /// Relative random perturbation applied to body size, body position and
    /// vein placement. Zero gives the nominal shape.
    pub jitter: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self { seed: 0, semi_axes: [7.0, 5.0, 4.5], vein_radius: [1.0, 1.5], vein_count: 4, jitter: 0.12 }
    }
}

impl PhantomSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vein {
    pub origin: [f64; 3],
    /// Unit direction.
    pub direction: [f64; 3],
    pub radius: f64,
}

/// Continuous geometry of one phantom, in grid coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomLayout {
    pub centre: [f64; 3],
    pub semi_axes: [f64; 3],
    pub veins: Vec<Vein>,
}

impl PhantomLayout {
    /// Draws body and vein parameters for `spec` on a grid of `dims`.
    pub fn plan(spec: &PhantomSpec, dims: [usize; 3]) -> Result<Self> {
        validate(spec, dims)?;
        let mut rng = rng::stream(spec.seed, 0);
        let j = spec.jitter;
        let mut noise = |scale: f64| if scale > 0.0 { rng.random_range(-scale..=scale) } else { 0.0 };

        let semi_axes: [f64; 3] = std::array::from_fn(|i| spec.semi_axes[i] * (1.0 + noise(j)));
        let centre: [f64; 3] = std::array::from_fn(|i| {
            (dims[i] as f64 - 1.0) / 2.0 + noise(j * spec.semi_axes[i] * 0.25)
        });

        let left = spec.vein_count.div_ceil(2);
        let mut veins = Vec::with_capacity(spec.vein_count);
        for v in 0..spec.vein_count {
            let (side, slot, per_side) =
                if v < left { (-1.0, v, left) } else { (1.0, v - left, spec.vein_count - left) };
            let f = if per_side == 1 { 0.0 } else { -1.0 + 2.0 * slot as f64 / (per_side - 1) as f64 };
            let origin = [
                centre[0],
                centre[1] + semi_axes[1] * (0.25 * f + noise(j * 0.25)),
                centre[2] + semi_axes[2] * (0.15 + noise(j * 0.5)),
            ];
            let d = [side, noise(j * 0.5), noise(j * 0.5)];
            let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            let direction = d.map(|c| c / norm);
            let [rlo, rhi] = spec.vein_radius;
            let radius = if rhi > rlo { rlo + (rhi - rlo) * (noise(1.0) + 1.0) / 2.0 } else { rlo };
            veins.push(Vein { origin, direction, radius });
        }
        Ok(Self { centre, semi_axes, veins })
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let e: f64 = (0..3).map(|i| ((p[i] - self.centre[i]) / self.semi_axes[i]).powi(2)).sum();
        e <= 1.0 || self.veins.iter().any(|v| v.contains(p))
    }

    /// Voxelizes the layout and keeps the 6-connected component that holds
    /// the body centre, so the result is always a single component.
    pub fn rasterize(&self, dims: [usize; 3]) -> VoxelGrid {
        let raw = VoxelGrid::from_fn(dims, [1.0; 3], |c| self.contains(c.map(|v| v as f64)));
        let (labels, _) = raw.components6();
        let centre = self.centre.map(|c| c.round() as usize);
        let keep = labels[raw.index(centre)];
        VoxelGrid::from_fn(dims, [1.0; 3], |c| labels[raw.index(c)] == keep)
    }
}

impl Vein {
    fn contains(&self, p: [f64; 3]) -> bool {
        let rel = [p[0] - self.origin[0], p[1] - self.origin[1], p[2] - self.origin[2]];
        let t = rel[0] * self.direction[0] + rel[1] * self.direction[1] + rel[2] * self.direction[2];
        if t < 0.0 {
            return false;
        }
        let d2: f64 = (0..3).map(|i| (rel[i] - t * self.direction[i]).powi(2)).sum();
        d2 <= self.radius * self.radius
    }
}

fn validate(spec: &PhantomSpec, dims: [usize; 3]) -> Result<()> {
    let bad = |msg: String| Err(VolumeError::InvalidSpec(msg));
    if spec.vein_count < 1 {
        return bad("vein count must be at least 1".into());
    }
    if !(0.0..=0.5).contains(&spec.jitter) {
        return bad(format!("jitter {} outside [0, 0.5]", spec.jitter));
    }
    let [rlo, rhi] = spec.vein_radius;
    if !(rlo >= 0.5 && rhi >= rlo && rhi.is_finite()) {
        return bad(format!("vein radius range [{rlo}, {rhi}] invalid (need 0.5 <= min <= max)"));
    }
    for i in 0..3 {
        let a = spec.semi_axes[i];
        if !(a.is_finite() && a >= 1.0) {
            return bad(format!("semi-axis {i} = {a} must be at least 1 voxel"));
        }
        let reach = a * (1.0 + spec.jitter) + a * spec.jitter * 0.25;
        let room = (dims[i] as f64 - 1.0) / 2.0 - 1.0;
        if reach > room {
            return bad(format!(
                "body reaches {reach:.2} voxels on axis {i}, grid leaves {room:.2} after margin"
            ));
        }
    }
    Ok(())
}

/// Deterministic binary phantom for `spec`.
pub fn synth_phantom(spec: &PhantomSpec, dims: [usize; 3]) -> Result<VoxelGrid> {
    Ok(PhantomLayout::plan(spec, dims)?.rasterize(dims))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_grid() {
        let spec = PhantomSpec::with_seed(11);
        assert_eq!(synth_phantom(&spec, [20; 3]).unwrap(), synth_phantom(&spec, [20; 3]).unwrap());
        let other = PhantomSpec::with_seed(12);
        assert_ne!(synth_phantom(&spec, [20; 3]).unwrap(), synth_phantom(&other, [20; 3]).unwrap());
    }

    #[test]
    fn single_component_with_veins_reaching_faces() {
        for seed in 0..20 {
            let g = synth_phantom(&PhantomSpec::with_seed(seed), [20; 3]).unwrap();
            let (_, sizes) = g.components6();
            assert_eq!(sizes.len(), 1, "seed {seed}");
            let touches = |x: usize| (0..20).any(|y| (0..20).any(|z| g.get([x, y, z]) == 1.0));
            assert!(touches(0) && touches(19), "seed {seed}: veins must reach both x faces");
        }
    }

    #[test]
    fn invalid_specs() {
        let no_veins = PhantomSpec { vein_count: 0, ..PhantomSpec::default() };
        assert!(matches!(synth_phantom(&no_veins, [20; 3]), Err(VolumeError::InvalidSpec(_))));
        let too_big = PhantomSpec { semi_axes: [9.5, 5.0, 5.0], ..PhantomSpec::default() };
        assert!(matches!(synth_phantom(&too_big, [20; 3]), Err(VolumeError::InvalidSpec(_))));
        let bad_radius = PhantomSpec { vein_radius: [2.0, 1.0], ..PhantomSpec::default() };
        assert!(synth_phantom(&bad_radius, [20; 3]).is_err());
    }
}
