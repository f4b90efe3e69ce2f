//! Scoring, simulated point acquisition, the end-to-end reconstruction
//! pipeline and the experiment runner.

mod experiment;
mod uncertainty;

pub use experiment::{
    evaluate, evaluate_report, run_experiment, synthetic_corpus, train_models, CaseResult, ExperimentConfig, ExperimentReport, LabeledGrid, MedianRow,
};
pub use uncertainty::{uncertainty_localization, LocalizationStats};

use crate::geometry::{alpha_hull_fill, marching_cubes, postprocess, GeometryError, TriangleMesh};
use crate::posterior::PosteriorSummary;
use crate::rbm::{self, RbmError, RbmModel};
use crate::rng;
use crate::vae::{self, VaeError, VaeModel};
use crate::volume::{PointCloud, VolumeError, VoxelGrid};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dice undefined: both grids are empty")]
    EmptyMetric,
    #[error("grid dims differ: {0:?} vs {1:?}")]
    DimsMismatch([usize; 3], [usize; 3]),
    #[error("ground truth has no surface")]
    EmptySurface,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Rbm(#[from] RbmError),
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EvalError {
    /// Pipeline stage the error came from, for user-facing reports.
    pub fn stage(&self) -> &'static str {
        match self {
            Self::EmptyMetric | Self::DimsMismatch(..) => "scoring",
            Self::EmptySurface => "acquisition",
            Self::InvalidConfig(_) => "config",
            Self::Geometry(_) => "geometry",
            Self::Rbm(_) | Self::Vae(_) => "model",
            Self::Volume(_) => "volume",
            Self::Io(_) => "io",
        }
    }
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// `2 |A n B| / (|A| + |B|)` over foreground voxels (value above 0.5).
pub fn dice(a: &VoxelGrid, b: &VoxelGrid) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(EvalError::DimsMismatch(a.dims(), b.dims()));
    }
    let (mut na, mut nb, mut both) = (0u64, 0u64, 0u64);
    for (&x, &y) in a.values().iter().zip(b.values()) {
        let (x, y) = (x > 0.5, y > 0.5);
        na += x as u64;
        nb += y as u64;
        both += (x && y) as u64;
    }
    if na + nb == 0 {
        return Err(EvalError::EmptyMetric);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rbm,
    Vae,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Rbm => "RBM",
            Self::Vae => "VAE",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rbm" => Ok(Self::Rbm),
            "vae" => Ok(Self::Vae),
            other => Err(format!("unknown model kind {other:?} (expected rbm or vae)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Rbm(RbmModel),
    Vae(VaeModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Rbm(_) => ModelKind::Rbm,
            Self::Vae(_) => ModelKind::Vae,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        match self {
            Self::Rbm(m) => m.dims(),
            Self::Vae(m) => m.dims(),
        }
    }

    pub fn posterior(&self, input: &VoxelGrid, n_samples: usize, rng: &mut impl RngCore) -> Result<PosteriorSummary> {
        Ok(match self {
            Self::Rbm(m) => rbm::posterior_predictive(input, m, n_samples, rng)?,
            Self::Vae(m) => vae::posterior_predictive_vae(input, m, n_samples, rng)?,
        })
    }

    /// Reads an `ARBM1` or `AVAE1` file, choosing by magic.
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(if bytes.starts_with(&rbm::MAGIC) {
            Self::Rbm(rbm::read_model(bytes.as_slice())?)
        } else {
            Self::Vae(vae::read_model(bytes.as_slice())?)
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        match self {
            Self::Rbm(m) => rbm::save_model(m, path)?,
            Self::Vae(m) => vae::save_model(m, path)?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EamSimConfig {
    pub n_points: usize,
    /// Radius in voxels around each sampled surface vertex within which
    /// foreground voxel centres are recorded.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for EamSimConfig {
    fn default() -> Self {
        Self { n_points: 100, threshold: 1.0, seed: 0 }
    }
}

/// Simulated mapping: samples `n_points` distinct vertices of the truth's
/// 0.5 isosurface and records every foreground voxel centre within
/// `threshold` of each, without duplicates. Points are in grid coordinates,
/// ordered by first recording.
pub fn simulate_acquisition(truth: &VoxelGrid, config: &EamSimConfig) -> Result<PointCloud> {
    if !(config.threshold.is_finite() && config.threshold > 0.0) {
        return Err(EvalError::InvalidConfig(format!("threshold must be positive, got {}", config.threshold)));
    }
    if config.n_points == 0 {
        return Ok(PointCloud::default());
    }
    let surface = marching_cubes(truth, 0.5)?;
    if surface.vertices.is_empty() {
        return Err(EvalError::EmptySurface);
    }
    let mut n = config.n_points;
    if n > surface.vertices.len() {
        log::warn!("requested {n} points but the surface has {} vertices; using all", surface.vertices.len());
        n = surface.vertices.len();
    }
    let mut rng = rng::stream(config.seed, 0);
    let picks = rand::seq::index::sample(&mut rng, surface.vertices.len(), n);

    let t = config.threshold;
    let dims = truth.dims();
    let mut seen = HashSet::new();
    let mut points = Vec::new();
    for vi in picks.iter() {
        let v = surface.vertices[vi];
        let lo = |a: usize| (v[a] - t).ceil().max(0.0) as isize;
        let hi = |a: usize| (v[a] + t).floor().min(dims[a] as f64 - 1.0) as isize;
        for z in lo(2)..=hi(2) {
            for y in lo(1)..=hi(1) {
                for x in lo(0)..=hi(0) {
                    let (x, y, z) = (x as usize, y as usize, z as usize);
                    let c = [x as f64, y as f64, z as f64];
                    let d2: f64 = (0..3).map(|a| (c[a] - v[a]).powi(2)).sum();
                    let i = truth.index([x, y, z]);
                    if d2 <= t * t && truth.is_foreground(i) && seen.insert(i) {
                        points.push(c);
                    }
                }
            }
        }
    }
    Ok(PointCloud::new(points)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructConfig {
    pub n_samples: usize,
    /// Probability level for the mean and mean +/- std surfaces.
    pub threshold: f32,
    pub smooth_iters: usize,
    pub min_component_fraction: f64,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self { n_samples: 50, threshold: 0.5, smooth_iters: 2, min_component_fraction: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// Hull fill of the acquired points, the model's conditioning input.
    pub hull: VoxelGrid,
    pub posterior: PosteriorSummary,
    /// Thresholded mean.
    pub mask: VoxelGrid,
    pub mean_mesh: TriangleMesh,
    /// Surface of `clamp(mean + std)`.
    pub upper_mesh: TriangleMesh,
    /// Surface of `clamp(mean - std)`.
    pub lower_mesh: TriangleMesh,
}

/// Points (grid coordinates) to meshes: hull fill, model posterior, then
/// threshold, marching cubes and clean-up for the mean and mean +/- one
/// standard deviation.
pub fn reconstruct(
    points: &PointCloud,
    model: &TrainedModel,
    config: &ReconstructConfig,
    rng: &mut impl RngCore,
) -> Result<Reconstruction> {
    if !(config.threshold > 0.0 && config.threshold < 1.0) {
        return Err(EvalError::InvalidConfig(format!("threshold {} outside (0, 1)", config.threshold)));
    }
    let hull = alpha_hull_fill(points, model.dims(), 0.0)?.grid;
    let posterior = model.posterior(&hull, config.n_samples, rng)?;
    let surface = |grid: &VoxelGrid| -> Result<TriangleMesh> {
        let mesh = marching_cubes(grid, config.threshold)?;
        Ok(postprocess(&mesh, config.min_component_fraction, config.smooth_iters))
    };
    let mean_mesh = surface(&posterior.mean)?;
    let upper_mesh = surface(&posterior.shifted(1.0))?;
    let lower_mesh = surface(&posterior.shifted(-1.0))?;
    let mask = posterior.mean_mask(config.threshold);
    Ok(Reconstruction { hull, posterior, mask, mean_mesh, upper_mesh, lower_mesh })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};

    fn grid(dims: [usize; 3], on: &[usize]) -> VoxelGrid {
        let mut v = vec![0.0; dims.iter().product()];
        for &i in on {
            v[i] = 1.0;
        }
        VoxelGrid::binary(dims, [1.0; 3], v).unwrap()
    }

    #[test]
    fn dice_examples() {
        let a = grid([4, 1, 1], &[0, 1]);
        let b = grid([4, 1, 1], &[1, 2]);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &grid([4, 1, 1], &[2, 3])).unwrap(), 0.0);
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
        assert_eq!(dice(&b, &a).unwrap(), 0.5);
        assert!(matches!(dice(&grid([4, 1, 1], &[]), &grid([4, 1, 1], &[])), Err(EvalError::EmptyMetric)));
        assert!(matches!(dice(&a, &grid([2, 2, 1], &[0])), Err(EvalError::DimsMismatch(..))));
    }

    fn blob() -> VoxelGrid {
        VoxelGrid::from_fn([10, 10, 10], [1.0; 3], |[x, y, z]| {
            let d = |c: usize| (c as f64 - 4.5).powi(2);
            d(x) + d(y) + d(z) <= 12.0
        })
    }

    #[test]
    fn acquisition_properties() {
        let truth = blob();
        let cfg = EamSimConfig { n_points: 30, threshold: 1.0, seed: 5 };
        let a = simulate_acquisition(&truth, &cfg).unwrap();
        assert_eq!(a, simulate_acquisition(&truth, &cfg).unwrap());
        assert!(!a.is_empty());
        let surface = marching_cubes(&truth, 0.5).unwrap();
        for p in &a.points {
            let v = p.map(|c| c as usize);
            assert!(truth.is_foreground(truth.index(v)));
            let near = surface.vertices.iter().any(|s| (0..3).map(|k| (s[k] - p[k]).powi(2)).sum::<f64>() <= 1.0);
            assert!(near);
        }
        let unique: HashSet<[u64; 3]> = a.points.iter().map(|p| p.map(|c| c as u64)).collect();
        assert_eq!(unique.len(), a.len());

        assert!(simulate_acquisition(&truth, &EamSimConfig { n_points: 0, ..cfg.clone() }).unwrap().is_empty());
        let all = simulate_acquisition(&truth, &EamSimConfig { n_points: 1_000_000, ..cfg.clone() }).unwrap();
        // Every shell voxel sits half a voxel from an edge vertex.
        let recorded: HashSet<usize> = all.points.iter().map(|p| truth.index(p.map(|c| c as usize))).collect();
        assert!(truth.surface_shell().iter().all(|i| recorded.contains(i)));
        let empty = VoxelGrid::zeros([4, 4, 4], [1.0; 3]);
        assert!(matches!(simulate_acquisition(&empty, &cfg), Err(EvalError::EmptySurface)));
    }

    fn saturated_rbm(truth: &VoxelGrid) -> TrainedModel {
        let m = truth.len();
        // Visible biases alone reproduce the truth regardless of input.
        let b = Array1::from_iter(truth.values().iter().map(|&v| if v > 0.5 { 40.0 } else { -40.0 }));
        TrainedModel::Rbm(RbmModel::from_parts(truth.dims(), Array2::zeros((m, 4)), b, Array1::zeros(4)).unwrap())
    }

    #[test]
    fn reconstruct_with_saturated_model() {
        let truth = blob();
        let pts = simulate_acquisition(&truth, &EamSimConfig { n_points: 40, threshold: 1.0, seed: 1 }).unwrap();
        let model = saturated_rbm(&truth);
        let cfg = ReconstructConfig { n_samples: 8, ..Default::default() };
        let r = reconstruct(&pts, &model, &cfg, &mut rng::stream(0, 0)).unwrap();
        assert_eq!(dice(&r.mask, &truth).unwrap(), 1.0);
        assert_eq!(r.mean_mesh, r.upper_mesh);
        assert_eq!(r.mean_mesh, r.lower_mesh);
        assert!(r.mean_mesh.is_closed());
    }

    #[test]
    fn reconstruct_surfaces_nest() {
        let truth = blob();
        let pts = simulate_acquisition(&truth, &EamSimConfig { n_points: 40, threshold: 1.0, seed: 1 }).unwrap();
        let model = TrainedModel::Rbm(RbmModel::init(truth.dims(), 6, 1.0, 3).unwrap());
        let r = reconstruct(&pts, &model, &ReconstructConfig { n_samples: 20, ..Default::default() }, &mut rng::stream(0, 0))
            .unwrap();
        let upper = r.posterior.shifted(1.0).threshold(0.5);
        let lower = r.posterior.shifted(-1.0).threshold(0.5);
        for i in 0..truth.len() {
            assert!(lower.values()[i] <= r.mask.values()[i] && r.mask.values()[i] <= upper.values()[i]);
        }
    }

    #[test]
    fn reconstruct_degenerate_points_is_geometry_error() {
        let model = saturated_rbm(&blob());
        let pts = PointCloud::new(vec![[1.0, 1.0, 1.0], [2.0, 1.0, 1.0], [1.0, 2.0, 1.0]]).unwrap();
        let err = reconstruct(&pts, &model, &ReconstructConfig::default(), &mut rng::stream(0, 0)).unwrap_err();
        assert_eq!(err.stage(), "geometry");
        assert!(err.to_string().contains("fewer than 4 points"));
    }

    #[test]
    fn model_kind_parsing() {
        assert_eq!("RBM".parse::<ModelKind>().unwrap(), ModelKind::Rbm);
        assert_eq!("vae".parse::<ModelKind>().unwrap(), ModelKind::Vae);
        assert!("gan".parse::<ModelKind>().is_err());
        assert_eq!(serde_json::to_string(&ModelKind::Vae).unwrap(), "\"vae\"");
    }
}
