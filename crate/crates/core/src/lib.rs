//! Watertight chamber surfaces with per-voxel uncertainty from sparse point
//! clouds.
//!
//! The pipeline runs in five stages: the acquired points are filled to their
//! convex hull on a voxel grid, a generative model (an RBM or a VAE trained
//! on example shapes) produces posterior-predictive samples conditioned on
//! that fill, the per-voxel mean and standard deviation are thresholded, and
//! marching cubes plus mesh clean-up turn the mean and mean +/- std grids
//! into closed surfaces. [`eval`] adds simulated acquisition, dice scoring
//! and the experiment runner.

pub mod eval;
pub mod geometry;
pub mod posterior;
pub mod rbm;
pub mod rng;
pub mod vae;
pub mod volume;

mod codec;

pub use eval::{dice, EvalError, ExperimentReport, ModelKind, Reconstruction, TrainedModel};
pub use geometry::{GeometryError, HullFill, TriangleMesh};
pub use posterior::PosteriorSummary;
pub use rbm::{CdConfig, RbmError, RbmModel};
pub use vae::{VaeError, VaeModel, VaeTrainConfig};
pub use volume::{FieldOfView, PhantomSpec, PointCloud, VolumeError, VoxelGrid};
