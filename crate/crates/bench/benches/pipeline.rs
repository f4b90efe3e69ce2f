use std::hint::black_box;

use atriamap_bench::{acquisition, corpus, DIMS};
use atriamap_core::eval::{reconstruct, ReconstructConfig};
use atriamap_core::geometry::{alpha_hull_fill, marching_cubes, postprocess};
use atriamap_core::rbm::{posterior_predictive, train_cd};
use atriamap_core::vae::posterior_predictive_vae;
use atriamap_core::{rng, CdConfig, RbmModel, TrainedModel, VaeModel};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn geometry(c: &mut Criterion) {
    let (_, truth) = corpus();
    let mut g = c.benchmark_group("geometry");
    g.bench_function("marching_cubes_20", |b| b.iter(|| marching_cubes(black_box(&truth), 0.5).unwrap()));
    let mesh = marching_cubes(&truth, 0.5).unwrap();
    g.bench_function("postprocess_20", |b| b.iter(|| postprocess(black_box(&mesh), 0.05, 2)));
    for n in [25, 250] {
        let points = acquisition(&truth, n);
        g.bench_with_input(BenchmarkId::new("hull_fill", n), &points, |b, p| {
            b.iter(|| alpha_hull_fill(black_box(p), DIMS, 0.0).unwrap())
        });
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let (train, _) = corpus();
    let mut g = c.benchmark_group("training");
    g.sample_size(10);
    let config = CdConfig { epochs: 1, ..CdConfig::default() };
    g.bench_function("cd1_epoch_15x8000x64", |b| b.iter(|| train_cd(black_box(&train), &config).unwrap()));

    let vae = VaeModel::init(DIMS, &[256, 64], 8, 0).unwrap();
    let x = train[0].to_f64();
    let eps = vec![0.3; 8];
    g.bench_function("vae_gradient_8000_256_64_8", |b| {
        b.iter(|| vae.loss_and_gradient_factors(black_box(&x), &eps, 1.0).unwrap())
    });
    g.finish();
}

fn posterior(c: &mut Criterion) {
    let (_, truth) = corpus();
    let hull = alpha_hull_fill(&acquisition(&truth, 100), DIMS, 0.0).unwrap().grid;
    let rbm = RbmModel::init(DIMS, 64, 0.01, 0).unwrap();
    let vae = VaeModel::init(DIMS, &[256, 64], 8, 0).unwrap();
    let mut g = c.benchmark_group("posterior");
    g.sample_size(10);
    g.bench_function("rbm_50_samples", |b| {
        b.iter(|| posterior_predictive(black_box(&hull), &rbm, 50, &mut rng::stream(1, 0)).unwrap())
    });
    g.bench_function("vae_50_samples", |b| {
        b.iter(|| posterior_predictive_vae(black_box(&hull), &vae, 50, &mut rng::stream(1, 0)).unwrap())
    });
    let points = acquisition(&truth, 100);
    let model = TrainedModel::Rbm(rbm.clone());
    g.bench_function("reconstruct_rbm_100_points", |b| {
        b.iter(|| reconstruct(black_box(&points), &model, &ReconstructConfig::default(), &mut rng::stream(1, 0)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, geometry, training, posterior);
criterion_main!(benches);
