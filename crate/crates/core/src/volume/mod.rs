//! Voxel grids, the point-to-voxel transform, volume files, dataset
//! preparation and synthetic phantoms.

mod io;
mod phantom;
mod prepare;

pub use io::{load_volume, read_volume, save_volume, write_volume, HEADER_LEN, MAGIC};
pub use phantom::{synth_phantom, PhantomLayout, PhantomSpec, Vein};
pub use prepare::{crop_window, prepare_dataset};

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid field of view: {0}")]
    InvalidFov(String),
    #[error("point outside field of view on axis {axis} (coordinate {value})")]
    OutOfFov { axis: usize, value: f64 },
    #[error("value {value} at index {index} is outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f32 },
    #[error("grid dims {actual:?} do not match expected {expected:?}")]
    DimsMismatch { expected: [usize; 3], actual: [usize; 3] },
    #[error("volume has no foreground voxels")]
    EmptyVolume,
    #[error("target dims {target:?} exceed available dims {available:?}")]
    TargetExceedsInput { target: [usize; 3], available: [usize; 3] },
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error("bad magic {0:?}, expected \"AVX1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported volume format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated header: {0} of 32 bytes")]
    TruncatedHeader(usize),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("payload length {actual} disagrees with dims (expected {expected} bytes)")]
    PayloadLengthMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = VolumeError> = std::result::Result<T, E>;

/// Axis-aligned field of view of the mapping system and its voxel resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldOfView {
    pub p_min: [f64; 3],
    pub p_max: [f64; 3],
    pub n: [usize; 3],
}

impl FieldOfView {
    pub fn new(p_min: [f64; 3], p_max: [f64; 3], n: [usize; 3]) -> Result<Self> {
        let fov = Self { p_min, p_max, n };
        fov.validate()?;
        Ok(fov)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.p_min[i].is_finite() && self.p_max[i].is_finite()) {
                return Err(VolumeError::InvalidFov(format!("non-finite bound on axis {i}")));
            }
            if self.p_min[i] >= self.p_max[i] {
                return Err(VolumeError::InvalidFov(format!(
                    "p_min[{i}] = {} must be below p_max[{i}] = {}",
                    self.p_min[i], self.p_max[i]
                )));
            }
            if self.n[i] < 2 {
                return Err(VolumeError::InvalidFov(format!("n[{i}] = {} must be at least 2", self.n[i])));
            }
        }
        Ok(())
    }

    /// Voxel edge lengths in mm.
    pub fn spacing(&self) -> [f64; 3] {
        std::array::from_fn(|i| (self.p_max[i] - self.p_min[i]) / self.n[i] as f64)
    }

    /// Continuous grid coordinates of a mm position, with voxel centres at
    /// integer coordinates. Voxel `i` covers `[i - 0.5, i + 0.5)`.
    pub fn to_grid_coords(&self, p: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| {
            (p[i] - self.p_min[i]) / (self.p_max[i] - self.p_min[i]) * self.n[i] as f64 - 0.5
        })
    }

    /// Inverse of [`to_grid_coords`](Self::to_grid_coords).
    pub fn from_grid_coords(&self, v: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| {
            self.p_min[i] + (v[i] + 0.5) / self.n[i] as f64 * (self.p_max[i] - self.p_min[i])
        })
    }
}

/// Maps a mm position to the voxel that contains it.
///
/// `v = floor(n (p - p_min) / (p_max - p_min))`, clamped to `n - 1` so that
/// points on the upper FOV face land in the last voxel.
pub fn voxelize(p: [f64; 3], fov: &FieldOfView) -> Result<[usize; 3]> {
    fov.validate()?;
    if p.iter().any(|c| !c.is_finite()) {
        return Err(VolumeError::InvalidInput(format!("non-finite coordinate {p:?}")));
    }
    let mut v = [0usize; 3];
    for i in 0..3 {
        if p[i] < fov.p_min[i] || p[i] > fov.p_max[i] {
            return Err(VolumeError::OutOfFov { axis: i, value: p[i] });
        }
        let scaled = (p[i] - fov.p_min[i]) / (fov.p_max[i] - fov.p_min[i]) * fov.n[i] as f64;
        v[i] = (scaled.floor() as usize).min(fov.n[i] - 1);
    }
    Ok(v)
}

/// What [`points_to_grid`] does with points that fall outside the FOV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OutOfFovPolicy {
    /// Drop the point and count it.
    #[default]
    Skip,
    /// Fail on the first offending point.
    Strict,
}

/// Binary grid with one foreground voxel per distinct in-FOV point.
/// Returns the grid and the number of points skipped.
pub fn points_to_grid(
    cloud: &PointCloud,
    fov: &FieldOfView,
    policy: OutOfFovPolicy,
) -> Result<(VoxelGrid, usize)> {
    fov.validate()?;
    let spacing = fov.spacing().map(|s| s as f32);
    let mut grid = VoxelGrid::zeros(fov.n, spacing);
    let mut skipped = 0;
    for &p in &cloud.points {
        match voxelize(p, fov) {
            Ok(v) => grid.set(v, 1.0),
            Err(VolumeError::OutOfFov { .. }) if policy == OutOfFovPolicy::Skip => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} of {} points outside the field of view", cloud.len());
    }
    Ok((grid, skipped))
}

/// Unstructured 3D points. Units depend on context: mm for mapping-system
/// input, grid coordinates once transformed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(VolumeError::InvalidInput(format!("non-finite coordinate {p:?}")));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Maps every point with `FieldOfView::to_grid_coords`.
    pub fn to_grid_coords(&self, fov: &FieldOfView) -> PointCloud {
        PointCloud { points: self.points.iter().map(|&p| fov.to_grid_coords(p)).collect() }
    }
}

/// Dense scalar field over a 3D lattice, stored x-fastest.
///
/// Values are occupancy probabilities in `[0, 1]`. A binary grid holds only
/// `0` and `1`. Voxel `(x, y, z)` has its centre at grid coordinate
/// `(x, y, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    spacing: [f32; 3],
    values: Vec<f32>,
    binary: bool,
}

impl VoxelGrid {
    /// All-zero binary grid.
    pub fn zeros(dims: [usize; 3], spacing: [f32; 3]) -> Self {
        Self { dims, spacing, values: vec![0.0; dims.iter().product()], binary: true }
    }

    /// Binary grid; every value must be exactly 0 or 1.
    pub fn binary(dims: [usize; 3], spacing: [f32; 3], values: Vec<f32>) -> Result<Self> {
        Self::check_len(dims, values.len())?;
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
            return Err(VolumeError::InvalidInput(format!(
                "binary grid value {value} at index {index}"
            )));
        }
        Ok(Self { dims, spacing, values, binary: true })
    }

    /// Probability grid; values must lie in `[0, 1]`.
    pub fn probability(dims: [usize; 3], spacing: [f32; 3], values: Vec<f32>) -> Result<Self> {
        Self::check_len(dims, values.len())?;
        if let Some((index, &value)) =
            values.iter().enumerate().find(|(_, &v)| !(0.0..=1.0).contains(&v))
        {
            return Err(VolumeError::ValueOutOfRange { index, value });
        }
        Ok(Self { dims, spacing, values, binary: false })
    }

    /// Binary grid from a predicate over voxel indices.
    pub fn from_fn(dims: [usize; 3], spacing: [f32; 3], mut inside: impl FnMut([usize; 3]) -> bool) -> Self {
        let mut grid = Self::zeros(dims, spacing);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    if inside([x, y, z]) {
                        grid.set([x, y, z], 1.0);
                    }
                }
            }
        }
        grid
    }

    fn check_len(dims: [usize; 3], len: usize) -> Result<()> {
        if dims.contains(&0) {
            return Err(VolumeError::InvalidInput(format!("zero-sized dims {dims:?}")));
        }
        let expected: usize = dims.iter().product();
        if expected != len {
            return Err(VolumeError::InvalidInput(format!(
                "dims {dims:?} need {expected} values, got {len}"
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, [x, y, z]: [usize; 3]) -> usize {
        debug_assert!(x < self.dims[0] && y < self.dims[1] && z < self.dims[2]);
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let y = (index / self.dims[0]) % self.dims[1];
        let z = index / (self.dims[0] * self.dims[1]);
        [x, y, z]
    }

    #[inline]
    pub fn get(&self, v: [usize; 3]) -> f32 {
        self.values[self.index(v)]
    }

    /// Value at signed coordinates; zero outside the grid.
    pub fn get_or_zero(&self, v: [isize; 3]) -> f32 {
        if (0..3).all(|i| v[i] >= 0 && (v[i] as usize) < self.dims[i]) {
            self.get(v.map(|c| c as usize))
        } else {
            0.0
        }
    }

    /// Sets one voxel. Panics if `value` is outside `[0, 1]`; clears the
    /// binary flag when `value` is fractional.
    pub fn set(&mut self, v: [usize; 3], value: f32) {
        assert!((0.0..=1.0).contains(&value), "voxel value {value} outside [0, 1]");
        let i = self.index(v);
        self.values[i] = value;
        if value != 0.0 && value != 1.0 {
            self.binary = false;
        }
    }

    /// `v > 0.5`.
    #[inline]
    pub fn is_foreground(&self, index: usize) -> bool {
        self.values[index] > 0.5
    }

    pub fn foreground_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.5).count()
    }

    /// Binary grid with 1 where `value > threshold`.
    pub fn threshold(&self, threshold: f32) -> VoxelGrid {
        VoxelGrid {
            dims: self.dims,
            spacing: self.spacing,
            values: self.values.iter().map(|&v| if v > threshold { 1.0 } else { 0.0 }).collect(),
            binary: true,
        }
    }

    /// Applies `f` to every value, clamping the result into `[0, 1]`.
    pub fn map_clamped(&self, mut f: impl FnMut(usize, f32) -> f32) -> VoxelGrid {
        let values: Vec<f32> =
            self.values.iter().enumerate().map(|(i, &v)| f(i, v).clamp(0.0, 1.0)).collect();
        let binary = values.iter().all(|&v| v == 0.0 || v == 1.0);
        VoxelGrid { dims: self.dims, spacing: self.spacing, values, binary }
    }

    /// Values as `f64`, the layout the models consume.
    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    /// Inclusive bounding box `(min, max)` of the foreground, if any.
    pub fn foreground_bounds(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for (i, _) in self.values.iter().enumerate().filter(|(_, &v)| v > 0.5) {
            let c = self.coords(i);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
            any = true;
        }
        any.then_some((lo, hi))
    }

    /// Labels 6-connected foreground components. Returns the label per voxel
    /// (`usize::MAX` for background) and the size of every component, in
    /// order of first appearance in x-fastest scan order.
    pub fn components6(&self) -> (Vec<usize>, Vec<usize>) {
        let mut labels = vec![usize::MAX; self.values.len()];
        let mut sizes = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..self.values.len() {
            if !self.is_foreground(start) || labels[start] != usize::MAX {
                continue;
            }
            let label = sizes.len();
            labels[start] = label;
            queue.push_back(start);
            let mut size = 0;
            while let Some(i) = queue.pop_front() {
                size += 1;
                let c = self.coords(i).map(|v| v as isize);
                for axis in 0..3 {
                    for step in [-1isize, 1] {
                        let mut n = c;
                        n[axis] += step;
                        if n[axis] < 0 || n[axis] as usize >= self.dims[axis] {
                            continue;
                        }
                        let j = self.index(n.map(|v| v as usize));
                        if self.is_foreground(j) && labels[j] == usize::MAX {
                            labels[j] = label;
                            queue.push_back(j);
                        }
                    }
                }
            }
            sizes.push(size);
        }
        (labels, sizes)
    }

    /// Foreground voxels with at least one 6-neighbour in the background
    /// (grid exterior counts as background).
    pub fn surface_shell(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&i| {
                self.is_foreground(i) && {
                    let c = self.coords(i).map(|v| v as isize);
                    (0..3).any(|axis| {
                        [-1isize, 1].iter().any(|&s| {
                            let mut n = c;
                            n[axis] += s;
                            self.get_or_zero(n) <= 0.5
                        })
                    })
                }
            })
            .collect()
    }

    /// Copy mirrored along one axis.
    pub fn mirrored(&self, axis: usize) -> VoxelGrid {
        let mut out = self.clone();
        for i in 0..self.values.len() {
            let mut c = self.coords(i);
            c[axis] = self.dims[axis] - 1 - c[axis];
            let j = self.index(c);
            out.values[j] = self.values[i];
        }
        out
    }
}
