//! Request and response bodies of the `/v1` JSON API.

use atriamap_core::volume::FieldOfView;
use atriamap_core::ModelKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub kind: ModelKind,
    pub dims: [usize; 3],
}

/// A client-supplied truth volume. `values` holds one 0/1 entry per voxel,
/// x fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumePayload {
    pub dims: [usize; 3],
    #[serde(default = "unit_spacing")]
    pub spacing: [f32; 3],
    pub values: Vec<u8>,
}

fn unit_spacing() -> [f32; 3] {
    [1.0; 3]
}

/// Exactly one of `phantom_seed` and `volume` may be set; neither means
/// phantom seed 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub model: String,
    #[serde(default)]
    pub phantom_seed: Option<u64>,
    #[serde(default)]
    pub volume: Option<VolumePayload>,
}

/// What a client may know about a session. Never carries truth voxels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionDescriptor {
    pub id: String,
    pub model: String,
    pub model_kind: ModelKind,
    pub revision: u64,
    pub n_points: usize,
    pub dims: [usize; 3],
    /// Millimetre bounds; voxel `i` is centred at `(i + 0.5) * spacing`.
    pub fov: FieldOfView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionState {
    #[serde(flatten)]
    pub descriptor: SessionDescriptor,
    /// Acquired points in mm, in acquisition order.
    pub points: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquireRequest {
    /// Requested position in mm.
    pub position: [f64; 3],
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    /// Recorded voxel centre in mm.
    pub point: [f64; 3],
    pub voxel: [usize; 3],
    pub revision: u64,
    pub n_points: usize,
    /// The voxel was already acquired, so nothing changed.
    pub duplicate: bool,
    /// Response replayed for a repeated idempotency key.
    pub replayed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshPayload {
    /// Vertex positions in mm.
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
    /// Posterior std at each vertex; present on the mean mesh only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ReconstructionResponse {
    Ok {
        revision: u64,
        n_points: usize,
        n_samples: usize,
        seed: u64,
        mesh: MeshPayload,
        upper: MeshPayload,
        lower: MeshPayload,
        /// Dice of the thresholded posterior mean against the hidden truth.
        score: f64,
        vertex_std: StdStats,
    },
    NeedsMorePoints {
        revision: u64,
        n_points: usize,
        required: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}
