use std::path::PathBuf;

use anyhow::{bail, Result};
use atriamap_core::eval::{evaluate_report, synthetic_corpus, train_models, ExperimentConfig};
use atriamap_core::ModelKind;
use clap::Args;

use super::ensure_dir;
use crate::config::{dims3, Resolver};
use crate::files::{load_labeled, volume_paths};
use crate::manifest::Recorder;

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Directory of AVX1 training volumes. Without --train-dir and
    /// --test-dir a synthetic corpus is generated from --seed.
    #[arg(long, requires = "test_dir")]
    train_dir: Option<PathBuf>,
    /// Directory of AVX1 test volumes.
    #[arg(long, requires = "train_dir")]
    test_dir: Option<PathBuf>,
    /// Output directory for report.jsonl, report.txt and manifest.json.
    #[arg(long)]
    out_dir: PathBuf,
    /// Surface vertices visited per acquisition [default: 25,100,250].
    #[arg(long, value_delimiter = ',')]
    points: Option<Vec<usize>>,
    /// Models to train and score [default: rbm,vae].
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<ModelKind>>,
    /// Experiment seed; training, acquisition and sampling seeds derive
    /// from it [default: 42].
    #[arg(long)]
    seed: Option<u64>,
    /// Synthetic corpus training volumes [default: 15].
    #[arg(long, conflicts_with = "train_dir")]
    train_count: Option<usize>,
    /// Synthetic corpus test volumes [default: 5].
    #[arg(long, conflicts_with = "train_dir")]
    test_count: Option<usize>,
    /// Synthetic corpus dims x,y,z [default: 20,20,20].
    #[arg(long, value_delimiter = ',', conflicts_with = "train_dir")]
    dims: Option<Vec<usize>>,
    /// Acquisition recording radius in voxels [default: 1].
    #[arg(long)]
    sim_threshold: Option<f64>,
    /// Posterior samples per reconstruction [default: 50].
    #[arg(long)]
    samples: Option<usize>,
    /// RBM training epochs [default: 100].
    #[arg(long)]
    rbm_epochs: Option<usize>,
    /// RBM hidden units [default: 64].
    #[arg(long)]
    rbm_hidden: Option<usize>,
    /// RBM learning rate [default: 0.003].
    #[arg(long)]
    rbm_lr: Option<f64>,
    /// VAE training epochs [default: 100].
    #[arg(long)]
    vae_epochs: Option<usize>,
    /// VAE encoder hidden widths [default: 256,64].
    #[arg(long, value_delimiter = ',')]
    vae_hidden_layers: Option<Vec<usize>>,
    /// VAE latent dimension [default: 8].
    #[arg(long)]
    vae_latent: Option<usize>,
    /// VAE learning rate [default: 5e-5].
    #[arg(long)]
    vae_lr: Option<f64>,
    /// Also save the trained models as rbm.arbm / vae.avae in the output
    /// directory.
    #[arg(long)]
    save_models: bool,
}

pub fn run(a: ExperimentArgs, mut cfg: Resolver) -> Result<()> {
    let seed = cfg.value("seed", a.seed, 42u64)?;
    let mut config = ExperimentConfig::default().with_seed(seed);
    config.point_counts = cfg.value("points", a.points, config.point_counts)?;
    config.models = cfg.value("models", a.models, config.models)?;
    config.sim_threshold = cfg.value("sim-threshold", a.sim_threshold, config.sim_threshold)?;
    config.reconstruct.n_samples = cfg.value("samples", a.samples, config.reconstruct.n_samples)?;
    config.rbm.epochs = cfg.value("rbm-epochs", a.rbm_epochs, config.rbm.epochs)?;
    config.rbm.n_hidden = cfg.value("rbm-hidden", a.rbm_hidden, config.rbm.n_hidden)?;
    config.rbm.learning_rate = cfg.value("rbm-lr", a.rbm_lr, config.rbm.learning_rate)?;
    config.vae.epochs = cfg.value("vae-epochs", a.vae_epochs, config.vae.epochs)?;
    config.vae.hidden = cfg.value("vae-hidden-layers", a.vae_hidden_layers, config.vae.hidden)?;
    config.vae.latent_dim = cfg.value("vae-latent", a.vae_latent, config.vae.latent_dim)?;
    config.vae.learning_rate = cfg.value("vae-lr", a.vae_lr, config.vae.learning_rate)?;
    if config.point_counts.is_empty() || config.models.is_empty() {
        bail!("need at least one point count and one model");
    }

    let mut rec = Recorder::new("experiment");
    rec.seed("seed", seed);
    rec.seed("rbm", config.rbm.seed);
    rec.seed("vae", config.vae.seed);
    let (train, test) = match (&a.train_dir, &a.test_dir) {
        (Some(train_dir), Some(test_dir)) => {
            let train_paths = volume_paths(train_dir)?;
            let test_paths = volume_paths(test_dir)?;
            train_paths.iter().chain(&test_paths).for_each(|p| rec.input(p));
            (load_labeled(&train_paths)?, load_labeled(&test_paths)?)
        }
        _ => {
            let n_train = cfg.value("train-count", a.train_count, 15usize)?;
            let n_test = cfg.value("test-count", a.test_count, 5usize)?;
            let dims = dims3(&cfg.value("dims", a.dims, vec![20, 20, 20])?)?;
            synthetic_corpus(seed, n_train, n_test, dims)?
        }
    };
    rec.lap("load");

    let models = train_models(&train, &config)?;
    rec.lap("train");
    let report = evaluate_report(&models, &train, &test, &config);
    rec.lap("evaluate");

    ensure_dir(&a.out_dir)?;
    let jsonl = a.out_dir.join("report.jsonl");
    let table = a.out_dir.join("report.txt");
    std::fs::write(&jsonl, report.to_json_lines())?;
    std::fs::write(&table, report.to_table())?;
    print!("{}", report.to_table());
    rec.output(&jsonl);
    rec.output(&table);
    if a.save_models {
        for model in &models {
            let path = a.out_dir.join(match model.kind() {
                ModelKind::Rbm => "rbm.arbm",
                ModelKind::Vae => "vae.avae",
            });
            model.save(&path)?;
            rec.output(path);
        }
    }
    rec.write(&a.out_dir.join("manifest.json"), cfg.finish())?;

    let errors = report.n_errors();
    if errors > 0 {
        bail!("{errors} of {} cases failed; see {}", report.cases.len(), jsonl.display());
    }
    Ok(())
}
