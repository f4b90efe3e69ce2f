mod common;

use std::collections::BTreeSet;
use std::path::PathBuf;

use atriamap_core::eval::{reconstruct, simulate_acquisition, EamSimConfig, ReconstructConfig, TrainedModel};
use atriamap_core::geometry::{alpha_hull_fill, marching_cubes, postprocess};
use atriamap_core::rbm::RbmModel;
use atriamap_core::rng;
use atriamap_core::volume::VoxelGrid;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

#[test]
fn dice_matches_set_recount_on_random_pairs() {
    let o = common::criteria::dice_oracle();
    assert!(o.pass, "{}", o.detail);
}

#[test]
fn acquired_points_are_foreground_voxels_near_the_surface() {
    let truth = VoxelGrid::from_fn([12, 12, 12], [1.0; 3], |[x, y, z]| {
        let d = |c: usize| (c as f64 - 5.5).powi(2);
        d(x) + d(y) / 0.6 + d(z) <= 16.0
    });
    let surface = marching_cubes(&truth, 0.5).unwrap();
    for n in [1, 10, 60] {
        let cfg = EamSimConfig { n_points: n, threshold: 1.0, seed: 3 };
        let cloud = simulate_acquisition(&truth, &cfg).unwrap();
        assert!(!cloud.is_empty());
        let mut seen = BTreeSet::new();
        for p in &cloud.points {
            let v = p.map(|c| c as usize);
            assert!(truth.get(v) > 0.5, "{p:?} is background");
            assert!(seen.insert(v), "{p:?} recorded twice");
            let near = surface.vertices.iter().any(|s| (0..3).map(|a| (s[a] - p[a]).powi(2)).sum::<f64>() <= 1.0);
            assert!(near, "{p:?} is not within the threshold of any surface vertex");
        }
        assert_eq!(simulate_acquisition(&truth, &cfg).unwrap(), cloud);
    }
}

const PATTERN_WEIGHT: f64 = 3.0;
const HIDDEN_BIAS: f64 = -12.0;
const VISIBLE_ON: f64 = 6.0;

/// Voxels of the 3x3x3 grid in the 2x2x3 column `x, y in {0, 1}`.
fn in_pattern([x, y, _]: [usize; 3]) -> bool {
    x < 2 && y < 2
}

/// A one-hidden-unit RBM whose conditioning and output are both readable by
/// hand: the hidden unit counts hull voxels inside the pattern, and the
/// visible layer favours the pattern whatever the hidden state.
fn traced_model() -> RbmModel {
    let dims = [3, 3, 3];
    let grid = VoxelGrid::zeros(dims, [1.0; 3]);
    let mut w = Array2::zeros((27, 1));
    let mut b = Array1::from_elem(27, -VISIBLE_ON);
    for i in 0..27 {
        if in_pattern(grid.coords(i)) {
            w[[i, 0]] = PATTERN_WEIGHT;
            b[i] = VISIBLE_ON;
        }
    }
    RbmModel::from_parts(dims, w, b, Array1::from_elem(1, HIDDEN_BIAS)).unwrap()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct Trace {
    truth: Vec<usize>,
    points: Vec<[f64; 3]>,
    hull: Vec<usize>,
    mean: Vec<f32>,
    std: Vec<f32>,
    mask: Vec<usize>,
    raw_vertices: usize,
    raw_triangles: usize,
    mesh_vertices: usize,
    mesh_triangles: usize,
    mesh_volume: f64,
}

fn on(grid: &VoxelGrid) -> Vec<usize> {
    (0..grid.len()).filter(|&i| grid.is_foreground(i)).collect()
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/trace_3x3x3.json")
}

#[test]
fn tiny_run_matches_stepwise_trace() {
    let dims = [3, 3, 3];
    let truth = VoxelGrid::from_fn(dims, [1.0; 3], |[x, y, z]| x < 2 && y < 2 && z < 2);
    let model = TrainedModel::Rbm(traced_model());
    let cfg = ReconstructConfig { n_samples: 40, ..ReconstructConfig::default() };

    // 1. acquisition: every block voxel touches the surface, so all eight
    // centres are recorded
    let points = simulate_acquisition(&truth, &EamSimConfig { n_points: 10_000, threshold: 1.0, seed: 1 }).unwrap();
    let got: BTreeSet<[usize; 3]> = points.points.iter().map(|p| p.map(|c| c as usize)).collect();
    let want: BTreeSet<[usize; 3]> = (0..8).map(|k| [k & 1, k >> 1 & 1, k >> 2 & 1]).collect();
    assert_eq!(got, want);

    // 2. hull fill of the unit cube's corners is exactly those corners
    let hull = alpha_hull_fill(&points, dims, 0.0).unwrap().grid;
    assert_eq!(on(&hull), on(&truth));

    // 3. posterior: 8 hull voxels in the pattern give the hidden unit an
    // input of 8 * 3 - 12 = 12. Each visible mean mixes sigma(b) and
    // sigma(b + w) with the fraction of hidden draws that fired.
    let mut r = rng::stream(5, 0);
    let posterior = model.posterior(&hull, cfg.n_samples, &mut r).unwrap();
    let grid = VoxelGrid::zeros(dims, [1.0; 3]);
    for i in 0..27 {
        let m = posterior.mean.values()[i] as f64;
        if in_pattern(grid.coords(i)) {
            assert!(m >= sigmoid(VISIBLE_ON) - 1e-6 && m <= sigmoid(VISIBLE_ON + PATTERN_WEIGHT) + 1e-6);
        } else {
            assert!((m - sigmoid(-VISIBLE_ON)).abs() < 1e-6);
            assert_eq!(posterior.std.values()[i], 0.0);
        }
    }
    assert!(8.0 * PATTERN_WEIGHT + HIDDEN_BIAS > 0.0);

    // 4. threshold: the 2x2x3 column
    let mask = posterior.mean_mask(cfg.threshold);
    let column: Vec<usize> = (0..27).filter(|&i| in_pattern(grid.coords(i))).collect();
    assert_eq!(on(&mask), column);

    // 5. surface: one lattice-edge vertex per foreground/background face of
    // the column, 2 * (2*2 + 2*3 + 2*3) = 32; larger polygons add a centre
    // vertex off the lattice. A closed sphere has F = 2 (V - 2).
    let raw = marching_cubes(&posterior.mean, cfg.threshold).unwrap();
    let on_edge = |v: &[f64; 3]| v.iter().filter(|c| c.fract() == 0.0).count() == 2;
    assert_eq!(raw.vertices.iter().filter(|v| on_edge(v)).count(), 32);
    assert_eq!(raw.triangles.len(), 2 * (raw.vertices.len() - 2));
    assert!(raw.is_closed());
    assert_eq!(raw.euler_characteristic(), 2);
    let mesh = postprocess(&raw, cfg.min_component_fraction, cfg.smooth_iters);
    assert!(mesh.is_closed());
    assert!(mesh.signed_volume() > 0.0 && mesh.signed_volume() < 12.0);

    // the pipeline entry point reproduces every stage
    let run = reconstruct(&points, &model, &cfg, &mut rng::stream(5, 0)).unwrap();
    assert_eq!(run.hull, hull);
    assert_eq!(run.posterior, posterior);
    assert_eq!(run.mask, mask);
    assert_eq!(run.mean_mesh, mesh);

    let trace = Trace {
        truth: on(&truth),
        points: points.points.clone(),
        hull: on(&hull),
        mean: posterior.mean.values().to_vec(),
        std: posterior.std.values().to_vec(),
        mask: on(&mask),
        raw_vertices: raw.vertices.len(),
        raw_triangles: raw.triangles.len(),
        mesh_vertices: mesh.vertices.len(),
        mesh_triangles: mesh.triangles.len(),
        mesh_volume: mesh.signed_volume(),
    };
    let path = golden_path();
    if std::env::var_os("ATRIAMAP_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(&trace).unwrap() + "\n").unwrap();
    }
    let mut golden: Trace = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!((golden.mesh_volume - trace.mesh_volume).abs() < 1e-12);
    golden.mesh_volume = trace.mesh_volume;
    assert_eq!(trace, golden, "stage outputs drifted from {}", path.display());
}
