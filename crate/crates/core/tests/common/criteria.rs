//! Acceptance checks shared by the oracle suites (which assert on them) and
//! the acceptance harness (which prints them).

use atriamap_core::eval::dice;
use atriamap_core::geometry::{alpha_hull_fill, marching_cubes};
use atriamap_core::rbm::{cd_gradient, posterior_predictive, train_cd, CdConfig, RbmModel};
use atriamap_core::rng;
use atriamap_core::vae::{kl_divergence, standard_normal, VaeModel};
use atriamap_core::volume::{PointCloud, VoxelGrid};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{bits, cosine, dice_recount, in_tetrahedron, Enumeration};

/// Whether a check passed, with the measured values.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

/// Gaussian-initialized RBM over `m` visible units laid out as `m x 1 x 1`.
pub fn random_rbm(m: usize, n: usize, sigma: f64, seed: u64) -> RbmModel {
    let mut r = rng::stream(seed, 0);
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut model = RbmModel::zeros([m, 1, 1], n).unwrap();
    model.weights.mapv_inplace(|_| normal.sample(&mut r));
    model.visible_bias.mapv_inplace(|_| normal.sample(&mut r));
    model.hidden_bias.mapv_inplace(|_| normal.sample(&mut r));
    model
}

/// Total variation between the exact visible marginal of a 6/3 model and a
/// Gibbs chain's empirical marginal after `sweeps` sweeps.
pub fn gibbs_total_variation(seed: u64, sweeps: usize) -> f64 {
    let model = random_rbm(6, 3, 1.0, seed);
    let exact = Enumeration::new(&model).visible_marginal();
    let mut r = rng::stream(seed, 1);
    let mut v = bits(0, 6);
    let mut counts = [0usize; 64];
    let burn_in = 1_000;
    for step in 0..burn_in + sweeps {
        v = model.gibbs_step(&v, &mut r).unwrap().0;
        if step >= burn_in {
            let k: usize = v.iter().enumerate().map(|(i, &x)| (x as usize) << i).sum();
            counts[k] += 1;
        }
    }
    0.5 * exact.iter().zip(counts).map(|(p, c)| (p - c as f64 / sweeps as f64).abs()).sum::<f64>()
}

/// Joint normalization and both conditionals against enumeration on five
/// random 6/3 models, plus the Gibbs marginal after 1e5 sweeps.
pub fn rbm_exactness() -> Outcome {
    let (mut norm_err, mut cond_err) = (0.0f64, 0.0f64);
    for seed in 0..5 {
        let model = random_rbm(6, 3, 1.0, seed);
        let e = Enumeration::new(&model);
        norm_err = norm_err.max((e.joint.iter().flatten().sum::<f64>() - 1.0).abs());
        for vk in 0..64 {
            let got = model.hidden_probs(&bits(vk, 6)).unwrap();
            for (a, b) in got.iter().zip(e.hidden_conditional(vk)) {
                cond_err = cond_err.max((a - b).abs());
            }
        }
        for hk in 0..8 {
            let got = model.visible_probs(&bits(hk, 3)).unwrap();
            for (a, b) in got.iter().zip(e.visible_conditional(hk)) {
                cond_err = cond_err.max((a - b).abs());
            }
        }
    }
    let tv = gibbs_total_variation(11, 100_000);
    Outcome::new(
        norm_err <= 1e-12 && cond_err <= 1e-10 && tv <= 0.05,
        format!("|sum P - 1| = {norm_err:.1e}, conditional error {cond_err:.1e}, Gibbs TV {tv:.4}"),
    )
}

/// Cosine between the mean of 2000 CD-1 gradients and the exact
/// log-likelihood gradient, for ten random 4/2 models.
pub fn cd_sanity() -> Outcome {
    let data_states = [0b1010, 0b0101, 0b1100, 0b0011];
    let data = Array2::from_shape_fn((4, 4), |(r, i)| bits(data_states[r], 4)[i]);
    let mut cosines = Vec::new();
    for init in 0..10 {
        let model = random_rbm(4, 2, 0.5, 100 + init);
        let exact = Enumeration::new(&model).log_likelihood_gradient(&data_states);
        let mut r = rng::stream(init, 7);
        let draws = 2_000;
        let mut mean = vec![0.0; exact.len()];
        for _ in 0..draws {
            let g = cd_gradient(&model, data.view(), 1, &mut r).unwrap();
            let flat = g.weights.iter().chain(&g.visible_bias).chain(&g.hidden_bias);
            for (acc, x) in mean.iter_mut().zip(flat) {
                *acc += x / draws as f64;
            }
        }
        cosines.push(cosine(&mean, &exact));
    }
    let agree = cosines.iter().filter(|&&c| c >= 0.5).count();
    let worst = cosines.iter().copied().fold(f64::INFINITY, f64::min);
    Outcome::new(agree >= 9, format!("{agree}/10 inits with cosine >= 0.5 (lowest {worst:.3})"))
}

/// Posterior-mean dice after training on one random 3x3x3 grid.
pub fn rbm_memorization() -> Outcome {
    let mut r = rng::stream(5, 0);
    let values: Vec<f32> = (0..27).map(|_| if r.random::<f64>() < 0.5 { 1.0 } else { 0.0 }).collect();
    let grid = VoxelGrid::binary([3, 3, 3], [1.0; 3], values).unwrap();
    let cfg = CdConfig { n_hidden: 8, epochs: 500, seed: 5, ..CdConfig::default() };
    let (model, _) = train_cd(std::slice::from_ref(&grid), &cfg).unwrap();
    let post = posterior_predictive(&grid, &model, 50, &mut rng::stream(5, 1)).unwrap();
    let d = dice(&post.mean, &grid).unwrap();
    Outcome::new(d >= 0.99, format!("dice {d:.4}"))
}

/// Worst analytic-vs-central-difference gradient error over every parameter
/// of a 12/5/2 model at ten random points.
pub fn vae_gradients() -> Outcome {
    let step = 1e-5;
    let (mut worst_rel, mut worst_abs, mut failures, mut checked) = (0.0f64, 0.0f64, 0usize, 0usize);
    for point in 0..10u64 {
        let mut r = rng::stream(point, 3);
        let mut model = VaeModel::init([3, 2, 2], &[5], 2, point).unwrap();
        let params: Vec<f64> = model.parameters().iter().map(|p| p + r.random_range(-0.3..0.3)).collect();
        model.set_parameters(&params).unwrap();
        let x: Vec<f64> = (0..12).map(|_| r.random::<f64>()).collect();
        let eps = standard_normal(2, &mut r);

        let (_, grads) = model.loss_and_gradient(&x, &eps, 1.0).unwrap();
        let analytic: Vec<f64> = grads.iter().flat_map(|l| l.w.iter().chain(l.b.iter()).copied().collect::<Vec<_>>()).collect();
        assert_eq!(analytic.len(), params.len());

        let mut probe = model.clone();
        for (k, a) in analytic.iter().enumerate() {
            let mut shifted = params.clone();
            shifted[k] = params[k] + step;
            probe.set_parameters(&shifted).unwrap();
            let up = probe.elbo_loss(&x, &eps, 1.0).unwrap().total;
            shifted[k] = params[k] - step;
            probe.set_parameters(&shifted).unwrap();
            let down = probe.elbo_loss(&x, &eps, 1.0).unwrap().total;
            let numeric = (up - down) / (2.0 * step);
            let err = (a - numeric).abs();
            let rel = err / a.abs().max(numeric.abs());
            checked += 1;
            worst_abs = worst_abs.max(err);
            if err > 1e-8 {
                worst_rel = worst_rel.max(rel);
                if rel > 1e-4 {
                    failures += 1;
                }
            }
        }
    }
    Outcome::new(failures == 0, format!(
            "{checked} partials, {failures} outside tolerance, max abs error {worst_abs:.1e}, worst relative error above the 1e-8 floor {worst_rel:.1e}"
        ))
}

pub fn kl_identities() -> Outcome {
    let zero = kl_divergence(&[0.0; 4], &[0.0; 4]);
    let worst = (1..6).map(|d| (kl_divergence(&vec![1.0; d], &vec![0.0; d]) - 0.5 * d as f64).abs()).fold(0.0, f64::max);
    Outcome::new(zero == 0.0 && worst <= 1e-12, format!("kl(0, 0) = {zero}, max |kl(1, 0) - d/2| = {worst:.1e}"))
}

pub fn random_padded_grid(seed: u64) -> VoxelGrid {
    let mut r = rng::stream(seed, 0);
    let density: f64 = r.random_range(0.05..0.95);
    VoxelGrid::from_fn([20; 3], [1.0; 3], |c| c.iter().all(|&x| (1..19).contains(&x)) && r.random::<f64>() < density)
}

/// Euler characteristic counted from the triangle list alone.
pub fn counted_euler(triangles: &[[usize; 3]]) -> i64 {
    let mut edges = std::collections::HashSet::new();
    let mut verts = std::collections::HashSet::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            edges.insert((a.min(b), a.max(b)));
            verts.insert(a);
        }
    }
    verts.len() as i64 - edges.len() as i64 + triangles.len() as i64
}

/// Random tetrahedron with integer vertices in a 20^3 grid and nonzero
/// volume.
pub fn random_tetrahedron(r: &mut impl Rng) -> [[f64; 3]; 4] {
    loop {
        let t: [[f64; 3]; 4] = std::array::from_fn(|_| std::array::from_fn(|_| r.random_range(0..20) as f64));
        let e = |i: usize| [t[i][0] - t[0][0], t[i][1] - t[0][1], t[i][2] - t[0][2]];
        let (a, b, c) = (e(1), e(2), e(3));
        let vol6 = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0]);
        if vol6 != 0.0 {
            return t;
        }
    }
}

/// Closed marching-cubes meshes on 100 random padded grids, the single-voxel
/// sphere, and hull fills of 50 tetrahedra against barycentric membership.
pub fn geometry() -> Outcome {
    let open = (0..100)
        .filter(|&seed| {
            let mesh = marching_cubes(&random_padded_grid(seed), 0.5).unwrap();
            mesh.is_empty() || mesh.edge_incidence().values().any(|&k| k != 2)
        })
        .count();
    let mut single = VoxelGrid::zeros([5; 3], [1.0; 3]);
    single.set([2, 2, 2], 1.0);
    let sphere = marching_cubes(&single, 0.5).unwrap();
    let chi = counted_euler(&sphere.triangles);

    let mut r = rng::stream(77, 0);
    let mut mismatched = 0;
    for _ in 0..50 {
        let t = random_tetrahedron(&mut r);
        let fill = alpha_hull_fill(&PointCloud::new(t.to_vec()).unwrap(), [20; 3], 0.0).unwrap();
        let differs = (0..8000).any(|k| {
            let c = fill.grid.coords(k).map(|x| x as f64);
            (fill.grid.values()[k] == 1.0) != in_tetrahedron(&t, c)
        });
        mismatched += differs as usize;
    }
    Outcome::new(
        open == 0 && chi == 2 && sphere.euler_characteristic() == 2 && mismatched == 0,
        format!("{open}/100 meshes open, single-voxel chi {chi}, {mismatched}/50 hull fills differ"),
    )
}

/// Pipeline dice against a set recount on 100 random grid pairs.
pub fn dice_oracle() -> Outcome {
    let mut r = rng::stream(7, 0);
    let dims = [6, 5, 4];
    let (mut worst, mut checked) = (0.0f64, 0);
    while checked < 100 {
        let pa = r.random_range(0.05..0.95);
        let pb = r.random_range(0.05..0.95);
        let a: Vec<f32> = (0..120).map(|_| r.random_bool(pa) as u8 as f32).collect();
        let b: Vec<f32> = (0..120).map(|_| r.random_bool(pb) as u8 as f32).collect();
        if a.iter().chain(&b).all(|&v| v == 0.0) {
            continue;
        }
        let ga = VoxelGrid::binary(dims, [1.0; 3], a).unwrap();
        let gb = VoxelGrid::binary(dims, [1.0; 3], b).unwrap();
        let d = dice(&ga, &gb).unwrap();
        worst = worst.max((d - dice_recount(&ga, &gb)).abs()).max((d - dice(&gb, &ga).unwrap()).abs());
        checked += 1;
    }
    Outcome::new(worst <= 1e-12, format!("max |dice - recount| over {checked} pairs = {worst:.1e}"))
}
