//! Subcommands. Tunable flags can also come from `--config`, keyed by their
//! long name; input and output paths are always flags.

mod data;
mod experiment;
mod models;
mod serve;

use std::path::Path;
use std::process::ExitCode;

use anyhow::Result;
use clap::Subcommand;

use crate::config::Resolver;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic phantom, or a train/test corpus with --out-dir.
    Phantom(data::PhantomArgs),
    /// Crop volumes to their foreground and resample them to common dims.
    Prep(data::PrepArgs),
    /// Train an RBM with contrastive divergence.
    TrainRbm(models::RbmArgs),
    /// Train a VAE.
    TrainVae(models::VaeArgs),
    /// Reconstruct mean and +/- std surfaces from a point list.
    Reconstruct(models::ReconstructArgs),
    /// Simulate a mapping acquisition on a truth volume.
    Simulate(data::SimulateArgs),
    /// Train both models and score reconstructions over point counts.
    Experiment(experiment::ExperimentArgs),
    /// Decode a grid of latent points of a VAE to meshes.
    LatentGrid(models::LatentArgs),
    /// Run the HTTP mapping service.
    Serve(serve::ServeArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Phantom(_) => "phantom",
            Self::Prep(_) => "prep",
            Self::TrainRbm(_) => "train-rbm",
            Self::TrainVae(_) => "train-vae",
            Self::Reconstruct(_) => "reconstruct",
            Self::Simulate(_) => "simulate",
            Self::Experiment(_) => "experiment",
            Self::LatentGrid(_) => "latent-grid",
            Self::Serve(_) => "serve",
        }
    }
}

pub fn run(command: Command, config: Option<&Path>) -> Result<ExitCode> {
    let cfg = Resolver::load(config)?;
    match command {
        Command::Phantom(a) => data::phantom(a, cfg),
        Command::Prep(a) => data::prep(a, cfg),
        Command::Simulate(a) => data::simulate(a, cfg),
        Command::TrainRbm(a) => models::train_rbm(a, cfg),
        Command::TrainVae(a) => models::train_vae(a, cfg),
        Command::Reconstruct(a) => models::reconstruct(a, cfg),
        Command::LatentGrid(a) => models::latent_grid(a, cfg),
        Command::Experiment(a) => experiment::run(a, cfg),
        Command::Serve(a) => serve::run(a, cfg),
    }?;
    Ok(ExitCode::SUCCESS)
}

/// Creates `dir` and its parents.
fn ensure_dir(dir: &Path) -> Result<()> {
    use anyhow::Context;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Creates the parent directory of an output file.
fn ensure_parent(file: &Path) -> Result<()> {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}
