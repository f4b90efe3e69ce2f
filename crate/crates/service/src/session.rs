use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use atriamap_core::eval::{reconstruct, ReconstructConfig};
use atriamap_core::geometry::marching_cubes;
use atriamap_core::rng;
use atriamap_core::volume::{FieldOfView, PointCloud, VoxelGrid};
use atriamap_core::{dice, EvalError, GeometryError, TrainedModel, TriangleMesh};

use crate::api::{Acquisition, MeshPayload, ReconstructionResponse, SessionDescriptor, SessionState, StdStats};
use crate::error::ApiError;

/// Fewest points with a chance of spanning a solid hull.
pub const MIN_POINTS: usize = 4;
const CACHE_ENTRIES: usize = 8;

/// A finished reconstruction with the mean mesh kept in mm for STL export.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub response: ReconstructionResponse,
    pub mean_mesh: Option<TriangleMesh>,
}

/// Cache key: revision, sample count and seed. The model is fixed per
/// session.
type CacheKey = (u64, usize, u64);

/// One mapping session. Mutations go through `&mut self`; the owner
/// serializes them.
pub struct Session {
    id: String,
    model_id: String,
    model: Arc<TrainedModel>,
    truth: Arc<VoxelGrid>,
    fov: FieldOfView,
    /// Vertices of the truth's 0.5 isosurface, grid coordinates.
    surface: Vec<[f64; 3]>,
    /// Acquired voxels, in order.
    voxels: Vec<[usize; 3]>,
    revision: u64,
    replies: HashMap<String, Acquisition>,
    cache: VecDeque<(CacheKey, Arc<Rendered>)>,
}

/// Outcome of a cache lookup.
pub enum Lookup {
    Cached(Arc<Rendered>),
    /// Not cached: compute from this snapshot, then [`Session::store`] it.
    Compute(Snapshot),
}

/// Everything a reconstruction needs, detached from the session lock.
pub struct Snapshot {
    model: Arc<TrainedModel>,
    truth: Arc<VoxelGrid>,
    fov: FieldOfView,
    voxels: Vec<[usize; 3]>,
    revision: u64,
}

impl Session {
    pub fn new(id: String, model_id: String, model: Arc<TrainedModel>, truth: VoxelGrid) -> Result<Self, ApiError> {
        if truth.dims() != model.dims() {
            return Err(ApiError::BadRequest(format!(
                "truth dims {:?} do not match model dims {:?}",
                truth.dims(),
                model.dims()
            )));
        }
        if truth.foreground_count() == 0 {
            return Err(ApiError::BadRequest("truth volume is empty".into()));
        }
        let dims = truth.dims();
        let spacing = truth.spacing();
        let p_max: [f64; 3] = std::array::from_fn(|i| dims[i] as f64 * f64::from(spacing[i]));
        let fov = FieldOfView::new([0.0; 3], p_max, dims).map_err(|e| ApiError::BadRequest(e.to_string()))?;
        let surface = marching_cubes(&truth, 0.5).map_err(|e| ApiError::BadRequest(e.to_string()))?.vertices;
        Ok(Self {
            id,
            model_id,
            model,
            truth: Arc::new(truth),
            fov,
            surface,
            voxels: Vec::new(),
            revision: 0,
            replies: HashMap::new(),
            cache: VecDeque::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn truth(&self) -> &VoxelGrid {
        &self.truth
    }

    pub fn descriptor(&self) -> SessionDescriptor {
        SessionDescriptor {
            id: self.id.clone(),
            model: self.model_id.clone(),
            model_kind: self.model.kind(),
            revision: self.revision,
            n_points: self.voxels.len(),
            dims: self.truth.dims(),
            fov: self.fov,
        }
    }

    pub fn state(&self) -> SessionState {
        SessionState { descriptor: self.descriptor(), points: self.voxels.iter().map(|&v| self.to_mm(v)).collect() }
    }

    fn to_mm(&self, v: [usize; 3]) -> [f64; 3] {
        self.fov.from_grid_coords(v.map(|c| c as f64))
    }

    /// Projects `position` (mm) to the nearest truth-surface vertex, then to
    /// the nearest foreground voxel centre, and records that voxel. A repeated
    /// idempotency key replays the first reply.
    pub fn acquire(&mut self, position: [f64; 3], key: Option<&str>) -> Result<Acquisition, ApiError> {
        if let Some(previous) = key.and_then(|k| self.replies.get(k)) {
            return Ok(Acquisition { replayed: true, ..previous.clone() });
        }
        let inside = (0..3).all(|i| position[i] >= self.fov.p_min[i] && position[i] <= self.fov.p_max[i]);
        if !inside || position.iter().any(|c| !c.is_finite()) {
            return Err(ApiError::OutsideFov(position));
        }
        let g = self.fov.to_grid_coords(position);
        let vertex = nearest(&self.surface, g).expect("non-empty truth has a surface");
        let voxel = self.nearest_foreground(vertex);
        let duplicate = self.voxels.contains(&voxel);
        if !duplicate {
            self.voxels.push(voxel);
            self.revision += 1;
        }
        let reply = Acquisition {
            point: self.to_mm(voxel),
            voxel,
            revision: self.revision,
            n_points: self.voxels.len(),
            duplicate,
            replayed: false,
        };
        if let Some(k) = key {
            self.replies.insert(k.to_owned(), reply.clone());
        }
        Ok(reply)
    }

    /// Foreground voxel centre closest to a surface vertex. Every vertex sits
    /// on a lattice edge with a foreground end, so a one-voxel box suffices.
    fn nearest_foreground(&self, v: [f64; 3]) -> [usize; 3] {
        let dims = self.truth.dims();
        let lo = |a: usize| (v[a].floor() as isize - 1).max(0) as usize;
        let hi = |a: usize| ((v[a].ceil() as isize + 1).max(0) as usize).min(dims[a] - 1);
        let mut best: Option<(f64, [usize; 3])> = None;
        for z in lo(2)..=hi(2) {
            for y in lo(1)..=hi(1) {
                for x in lo(0)..=hi(0) {
                    let c = [x, y, z];
                    if self.truth.get(c) <= 0.5 {
                        continue;
                    }
                    let d2: f64 = (0..3).map(|a| (c[a] as f64 - v[a]).powi(2)).sum();
                    if best.map_or(true, |(b, _)| d2 < b) {
                        best = Some((d2, c));
                    }
                }
            }
        }
        best.expect("surface vertex borders a foreground voxel").1
    }

    /// Cached result or a snapshot to compute it from. Fails on a stale
    /// revision.
    pub fn lookup(&self, n_samples: usize, seed: u64, rev: Option<u64>) -> Result<Lookup, ApiError> {
        if let Some(requested) = rev.filter(|&r| r != self.revision) {
            return Err(ApiError::StaleRevision { requested, current: self.revision });
        }
        let key = (self.revision, n_samples, seed);
        if let Some((_, hit)) = self.cache.iter().find(|(k, _)| *k == key) {
            return Ok(Lookup::Cached(hit.clone()));
        }
        Ok(Lookup::Compute(Snapshot {
            model: self.model.clone(),
            truth: self.truth.clone(),
            fov: self.fov,
            voxels: self.voxels.clone(),
            revision: self.revision,
        }))
    }

    /// Stores a result computed from a snapshot; ignored if the session has
    /// moved on.
    pub fn store(&mut self, n_samples: usize, seed: u64, revision: u64, rendered: Arc<Rendered>) {
        if revision != self.revision {
            return;
        }
        let key = (revision, n_samples, seed);
        if self.cache.iter().any(|(k, _)| *k == key) {
            return;
        }
        if self.cache.len() == CACHE_ENTRIES {
            self.cache.pop_front();
        }
        self.cache.push_back((key, rendered));
    }
}

impl Snapshot {
    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Runs the pipeline on the acquired points. The rng is stream
    /// `revision` of `seed`, so a request is reproducible from its
    /// parameters.
    pub fn render(&self, n_samples: usize, seed: u64) -> Result<Rendered, ApiError> {
        let n_points = self.voxels.len();
        let needs_more = |reason: String| Rendered {
            response: ReconstructionResponse::NeedsMorePoints {
                revision: self.revision,
                n_points,
                required: MIN_POINTS,
                reason,
            },
            mean_mesh: None,
        };
        if n_points < MIN_POINTS {
            return Ok(needs_more(format!("{n_points} of {MIN_POINTS} points acquired")));
        }
        let cloud = PointCloud::new(self.voxels.iter().map(|v| v.map(|c| c as f64)).collect())
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        let config = ReconstructConfig { n_samples, ..ReconstructConfig::default() };
        let run = match reconstruct(&cloud, &self.model, &config, &mut rng::stream(seed, self.revision)) {
            Ok(run) => run,
            Err(EvalError::Geometry(e @ GeometryError::Degenerate { .. })) => return Ok(needs_more(e.to_string())),
            Err(e) => return Err(ApiError::Internal(format!("{} stage: {e}", e.stage()))),
        };
        let score = dice(&run.mask, &self.truth).map_err(|e| ApiError::Internal(e.to_string()))?;
        let std: Vec<f64> = run.mean_mesh.vertices.iter().map(|&v| trilinear(&run.posterior.std, v)).collect();
        let vertex_std = if std.is_empty() {
            StdStats { min: 0.0, max: 0.0, mean: 0.0 }
        } else {
            StdStats {
                min: std.iter().copied().fold(f64::INFINITY, f64::min),
                max: std.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean: std.iter().sum::<f64>() / std.len() as f64,
            }
        };
        let to_mm = |m: &TriangleMesh| m.transformed(|v| self.fov.from_grid_coords(v));
        let payload = |m: &TriangleMesh, std: Option<Vec<f64>>| MeshPayload {
            vertices: m.vertices.clone(),
            triangles: m.triangles.clone(),
            std,
        };
        let mean_mm = to_mm(&run.mean_mesh);
        Ok(Rendered {
            response: ReconstructionResponse::Ok {
                revision: self.revision,
                n_points,
                n_samples,
                seed,
                mesh: payload(&mean_mm, Some(std)),
                upper: payload(&to_mm(&run.upper_mesh), None),
                lower: payload(&to_mm(&run.lower_mesh), None),
                score,
                vertex_std,
            },
            mean_mesh: Some(mean_mm),
        })
    }
}

fn nearest(points: &[[f64; 3]], q: [f64; 3]) -> Option<[f64; 3]> {
    let d2 = |p: &[f64; 3]| (0..3).map(|a| (p[a] - q[a]).powi(2)).sum::<f64>();
    points.iter().min_by(|a, b| d2(a).total_cmp(&d2(b))).copied()
}

/// Trilinear interpolation at grid coordinates `p`, clamped to the grid.
pub fn trilinear(grid: &VoxelGrid, p: [f64; 3]) -> f64 {
    let dims = grid.dims();
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let top = (dims[a] - 1) as f64;
        let c = p[a].clamp(0.0, top);
        let i = (c.floor() as usize).min(dims[a].saturating_sub(2));
        base[a] = i;
        frac[a] = if dims[a] > 1 { c - i as f64 } else { 0.0 };
    }
    let mut acc = 0.0;
    for corner in 0..8 {
        let mut w = 1.0;
        let mut c = base;
        for a in 0..3 {
            let up = corner >> a & 1 == 1;
            if up {
                c[a] = (c[a] + 1).min(dims[a] - 1);
            }
            w *= if up { frac[a] } else { 1.0 - frac[a] };
        }
        acc += w * f64::from(grid.get(c));
    }
    acc
}
