use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use atriamap_core::eval::{dice, reconstruct as run_reconstruction, ReconstructConfig};
use atriamap_core::geometry::marching_cubes;
use atriamap_core::rbm::train_cd;
use atriamap_core::vae::{latent_grid as grid_points, latent_index, train_vae as fit_vae, Optimizer, DEFAULT_LATENT_BUDGET};
use atriamap_core::volume::{load_volume, save_volume};
use atriamap_core::{rng, CdConfig, FieldOfView, TrainedModel, TriangleMesh, VaeTrainConfig, VoxelGrid};
use clap::Args;
use serde::Serialize;
use serde_json::json;

use super::{ensure_dir, ensure_parent};
use crate::config::{ConfigValue, Resolver};
use crate::files::{load_labeled, read_points, volume_paths, write_mesh, MeshFormat};
use crate::manifest::{beside, Recorder};

fn training_set(dir: &std::path::Path, rec: &mut Recorder) -> Result<Vec<VoxelGrid>> {
    let paths = volume_paths(dir)?;
    let grids = load_labeled(&paths)?.into_iter().map(|g| g.grid).collect();
    paths.into_iter().for_each(|p| rec.input(p));
    rec.lap("load");
    Ok(grids)
}

fn log_path(model: &std::path::Path) -> PathBuf {
    let mut name = model.file_name().unwrap_or_default().to_os_string();
    name.push(".log.jsonl");
    model.with_file_name(name)
}

#[derive(Debug, Args)]
pub struct RbmArgs {
    /// Directory of AVX1 training volumes (all the same dims).
    #[arg(long)]
    data: PathBuf,
    /// Output ARBM1 model file; the per-epoch log goes to <out>.log.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Hidden units [default: 64].
    #[arg(long)]
    hidden: Option<usize>,
    /// Gibbs steps per update [default: 1].
    #[arg(long)]
    k: Option<usize>,
    /// Learning rate [default: 0.003].
    #[arg(long)]
    lr: Option<f64>,
    /// Passes over the training set [default: 100].
    #[arg(long)]
    epochs: Option<usize>,
    /// Volumes per update [default: 1].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Std of the initial weights [default: 0.01].
    #[arg(long)]
    sigma: Option<f64>,
    /// Training seed (weights, shuffling, Gibbs sampling) [default: 0].
    #[arg(long)]
    seed: Option<u64>,
}

pub fn train_rbm(a: RbmArgs, mut cfg: Resolver) -> Result<()> {
    let d = CdConfig::default();
    let config = CdConfig {
        n_hidden: cfg.value("hidden", a.hidden, d.n_hidden)?,
        k: cfg.value("k", a.k, d.k)?,
        learning_rate: cfg.value("lr", a.lr, d.learning_rate)?,
        epochs: cfg.value("epochs", a.epochs, d.epochs)?,
        batch_size: cfg.value("batch-size", a.batch_size, d.batch_size)?,
        weight_init_sigma: cfg.value("sigma", a.sigma, d.weight_init_sigma)?,
        seed: cfg.value("seed", a.seed, d.seed)?,
        ..d
    };
    let mut rec = Recorder::new("train-rbm");
    rec.seed("seed", config.seed);
    let grids = training_set(&a.data, &mut rec)?;
    let (model, log) = train_cd(&grids, &config)?;
    rec.lap("train");
    ensure_parent(&a.out)?;
    let model = TrainedModel::Rbm(model);
    model.save(&a.out)?;
    let log_out = log_path(&a.out);
    std::fs::write(&log_out, log.to_json_lines())?;
    rec.output(&a.out);
    rec.output(log_out);
    rec.write(&beside(&a.out), cfg.finish())
}

#[derive(Debug, Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

impl ConfigValue for OptimizerArg {
    fn parse_value(s: &str) -> Result<Self, String> {
        <Self as clap::ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Args)]
pub struct VaeArgs {
    /// Directory of AVX1 training volumes (all the same dims).
    #[arg(long)]
    data: PathBuf,
    /// Output AVAE1 model file; the per-epoch log goes to <out>.log.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Encoder hidden widths, mirrored in the decoder [default: 256,64].
    #[arg(long, value_delimiter = ',')]
    hidden_layers: Option<Vec<usize>>,
    /// Latent dimension [default: 8].
    #[arg(long)]
    latent: Option<usize>,
    /// Passes over the training set [default: 100].
    #[arg(long)]
    epochs: Option<usize>,
    /// Volumes per update [default: 1].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Update rule [default: sgd].
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    /// Learning rate [default: 5e-5].
    #[arg(long)]
    lr: Option<f64>,
    /// SGD momentum, or Adam's first-moment decay [default: 0.9].
    #[arg(long)]
    momentum: Option<f64>,
    /// Weight of the KL term [default: 1].
    #[arg(long)]
    kl_weight: Option<f64>,
    /// Gradient norm clip, 0 to disable [default: 1000].
    #[arg(long)]
    max_grad_norm: Option<f64>,
    /// Training seed (weights, shuffling, noise) [default: 0].
    #[arg(long)]
    seed: Option<u64>,
}

pub fn train_vae(a: VaeArgs, mut cfg: Resolver) -> Result<()> {
    let d = VaeTrainConfig::default();
    let optimizer = match cfg.value("optimizer", a.optimizer, OptimizerArg::Sgd)? {
        OptimizerArg::Sgd => Optimizer::Sgd,
        OptimizerArg::Adam => Optimizer::Adam,
    };
    let config = VaeTrainConfig {
        hidden: cfg.value("hidden-layers", a.hidden_layers, d.hidden.clone())?,
        latent_dim: cfg.value("latent", a.latent, d.latent_dim)?,
        epochs: cfg.value("epochs", a.epochs, d.epochs)?,
        batch_size: cfg.value("batch-size", a.batch_size, d.batch_size)?,
        optimizer,
        learning_rate: cfg.value("lr", a.lr, d.learning_rate)?,
        momentum: cfg.value("momentum", a.momentum, d.momentum)?,
        kl_weight: cfg.value("kl-weight", a.kl_weight, d.kl_weight)?,
        max_grad_norm: cfg.value("max-grad-norm", a.max_grad_norm, d.max_grad_norm)?,
        seed: cfg.value("seed", a.seed, d.seed)?,
        ..d
    };
    let mut rec = Recorder::new("train-vae");
    rec.seed("seed", config.seed);
    let grids = training_set(&a.data, &mut rec)?;
    let (model, log) = fit_vae(&grids, &config)?;
    rec.lap("train");
    ensure_parent(&a.out)?;
    let model = TrainedModel::Vae(model);
    model.save(&a.out)?;
    let log_out = log_path(&a.out);
    std::fs::write(&log_out, log.to_json_lines())?;
    rec.output(&a.out);
    rec.output(log_out);
    rec.write(&beside(&a.out), cfg.finish())
}

fn load_model(path: &std::path::Path) -> Result<TrainedModel> {
    TrainedModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// ARBM1 or AVAE1 model file.
    #[arg(long)]
    model: PathBuf,
    /// Point list, one `x y z` per line (grid coordinates unless --fov).
    #[arg(long)]
    points: PathBuf,
    /// Output directory for meshes, grids and summary.json.
    #[arg(long)]
    out_dir: PathBuf,
    /// Posterior samples [default: 50].
    #[arg(long)]
    samples: Option<usize>,
    /// Probability level of the surfaces [default: 0.5].
    #[arg(long)]
    threshold: Option<f32>,
    /// Laplacian smoothing passes [default: 2].
    #[arg(long)]
    smooth_iters: Option<usize>,
    /// Posterior sampling seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Mesh file format [default: obj].
    #[arg(long, value_enum)]
    format: Option<MeshFormat>,
    /// Field of view xmin,ymin,zmin,xmax,ymax,zmax in mm. Points are then
    /// read in mm and meshes written in mm.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    fov: Option<Vec<f64>>,
    /// Ground-truth AVX1 volume; adds its dice score to the summary.
    #[arg(long)]
    truth: Option<PathBuf>,
}

fn mesh_summary(mesh: &TriangleMesh) -> serde_json::Value {
    json!({
        "vertices": mesh.vertices.len(),
        "triangles": mesh.triangles.len(),
        "closed": mesh.is_closed(),
        "euler": mesh.euler_characteristic(),
    })
}

pub fn reconstruct(a: ReconstructArgs, mut cfg: Resolver) -> Result<()> {
    let d = ReconstructConfig::default();
    let config = ReconstructConfig {
        n_samples: cfg.value("samples", a.samples, d.n_samples)?,
        threshold: cfg.value("threshold", a.threshold, d.threshold)?,
        smooth_iters: cfg.value("smooth-iters", a.smooth_iters, d.smooth_iters)?,
        ..d
    };
    let seed = cfg.value("seed", a.seed, 0u64)?;
    let format = cfg.value("format", a.format, MeshFormat::Obj)?;
    let fov = cfg.optional("fov", a.fov)?;
    let mut rec = Recorder::new("reconstruct");
    rec.seed("seed", seed);

    let model = load_model(&a.model)?;
    let cloud = read_points(&a.points)?;
    rec.input(&a.model);
    rec.input(&a.points);
    let fov = match fov {
        Some(v) => {
            let [x0, y0, z0, x1, y1, z1] = v.as_slice() else {
                bail!("--fov needs 6 values, got {}", v.len());
            };
            Some(FieldOfView::new([*x0, *y0, *z0], [*x1, *y1, *z1], model.dims())?)
        }
        None => None,
    };
    let grid_points = match &fov {
        Some(f) => cloud.to_grid_coords(f),
        None => cloud,
    };
    rec.lap("load");
    let run = run_reconstruction(&grid_points, &model, &config, &mut rng::stream(seed, 0))?;
    rec.lap("reconstruct");

    ensure_dir(&a.out_dir)?;
    let to_output = |mesh: &TriangleMesh| match &fov {
        Some(f) => mesh.transformed(|v| f.from_grid_coords(v)),
        None => mesh.clone(),
    };
    for (name, mesh) in [("mean", &run.mean_mesh), ("upper", &run.upper_mesh), ("lower", &run.lower_mesh)] {
        let path = a.out_dir.join(format!("{name}.{}", format.extension()));
        write_mesh(&to_output(mesh), &path, format)?;
        rec.output(path);
    }
    for (name, grid) in [("hull", &run.hull), ("mean", &run.posterior.mean), ("std", &run.posterior.std), ("mask", &run.mask)] {
        let path = a.out_dir.join(format!("{name}.avx"));
        save_volume(grid, &path)?;
        rec.output(path);
    }
    let score = match &a.truth {
        Some(path) => {
            rec.input(path);
            let truth = load_volume(path).with_context(|| format!("loading {}", path.display()))?;
            Some(dice(&run.mask, &truth)?)
        }
        None => None,
    };
    let std = run.posterior.std.values();
    let summary = json!({
        "model": model.kind(),
        "n_points": grid_points.len(),
        "n_samples": config.n_samples,
        "seed": seed,
        "dice": score,
        "mean": mesh_summary(&run.mean_mesh),
        "upper": mesh_summary(&run.upper_mesh),
        "lower": mesh_summary(&run.lower_mesh),
        "std": {
            "max": std.iter().copied().fold(0.0f32, f32::max),
            "mean": std.iter().map(|&s| f64::from(s)).sum::<f64>() / std.len() as f64,
        },
    });
    let summary_path = a.out_dir.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")?;
    rec.output(summary_path);
    rec.lap("write");
    rec.write(&a.out_dir.join("manifest.json"), cfg.finish())
}

#[derive(Debug, Args)]
pub struct LatentArgs {
    /// AVAE1 model file.
    #[arg(long)]
    model: PathBuf,
    /// Output directory: one mesh per grid point plus latent.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
    /// Values per latent dimension [default: 3].
    #[arg(long)]
    steps: Option<usize>,
    /// Quantile range a,b mapped through the normal quantile [default: 0.05,0.95].
    #[arg(long, value_delimiter = ',')]
    range: Option<Vec<f64>>,
    /// Maximum number of grid points [default: 4096].
    #[arg(long)]
    budget: Option<usize>,
    /// Probability level of the decoded surfaces [default: 0.5].
    #[arg(long)]
    threshold: Option<f32>,
    /// Mesh file format [default: obj].
    #[arg(long, value_enum)]
    format: Option<MeshFormat>,
}

pub fn latent_grid(a: LatentArgs, mut cfg: Resolver) -> Result<()> {
    let k = cfg.value("steps", a.steps, 3usize)?;
    let range = cfg.value("range", a.range, vec![0.05, 0.95])?;
    let budget = cfg.value("budget", a.budget, DEFAULT_LATENT_BUDGET)?;
    let threshold = cfg.value("threshold", a.threshold, 0.5f32)?;
    let format = cfg.value("format", a.format, MeshFormat::Obj)?;
    let [lo, hi] = range.as_slice() else {
        bail!("--range needs 2 values, got {}", range.len());
    };
    let mut rec = Recorder::new("latent-grid");
    let TrainedModel::Vae(model) = load_model(&a.model)? else {
        bail!("latent-grid needs a VAE model, {} is an RBM", a.model.display());
    };
    rec.input(&a.model);
    let d = model.latent_dim();
    let samples = grid_points(d, k, *lo, *hi, budget)?;
    ensure_dir(&a.out_dir)?;
    let mut index_lines = String::new();
    for (flat, sample) in samples.iter().enumerate() {
        let idx = latent_index(flat, d, k);
        let probs = model.decode(&sample.z)?;
        let grid = VoxelGrid::probability(model.dims(), [1.0; 3], probs.iter().map(|&p| p as f32).collect())?;
        let mesh = marching_cubes(&grid, threshold)?;
        let tag = idx.iter().map(usize::to_string).collect::<Vec<_>>().join("-");
        let name = format!("z_{tag}.{}", format.extension());
        write_mesh(&mesh, &a.out_dir.join(&name), format)?;
        index_lines.push_str(&serde_json::to_string(&json!({ "file": name, "index": idx, "z": sample.z }))?);
        index_lines.push('\n');
        rec.output(a.out_dir.join(name));
    }
    rec.lap("decode");
    let index_path = a.out_dir.join("latent.jsonl");
    std::fs::write(&index_path, index_lines)?;
    rec.output(index_path);
    rec.write(&a.out_dir.join("manifest.json"), cfg.finish())
}
