use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use atriamap_core::eval::{simulate_acquisition, EamSimConfig};
use atriamap_core::rng;
use atriamap_core::volume::{load_volume, prepare_dataset, save_volume, synth_phantom};
use atriamap_core::PhantomSpec;
use clap::Args;

use super::{ensure_dir, ensure_parent};
use crate::config::{dims3, Resolver};
use crate::files::{format_points, volume_paths};
use crate::manifest::{beside, Recorder};

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("dest").required(true).args(["out", "out_dir"]))]
pub struct PhantomArgs {
    /// Phantom seed; corpus volume i uses a seed mixed from this and i.
    #[arg(long)]
    seed: Option<u64>,
    /// Grid dimensions x,y,z [default: 20,20,20].
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Body semi-axes in voxels [default: 7,5,4.5].
    #[arg(long, value_delimiter = ',')]
    semi_axes: Option<Vec<f64>>,
    /// Vein radius range lo,hi in voxels [default: 1,1.5].
    #[arg(long, value_delimiter = ',')]
    vein_radius: Option<Vec<f64>>,
    /// Number of pulmonary veins [default: 4].
    #[arg(long)]
    veins: Option<usize>,
    /// Relative shape perturbation; 0 gives the nominal shape [default: 0.12].
    #[arg(long)]
    jitter: Option<f64>,
    /// Write a single phantom to this AVX1 file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a corpus as DIR/train/train-NN.avx and DIR/test/test-NN.avx.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Corpus training volumes [default: 15].
    #[arg(long = "train", requires = "out_dir")]
    n_train: Option<usize>,
    /// Corpus test volumes [default: 5].
    #[arg(long = "test", requires = "out_dir")]
    n_test: Option<usize>,
}

fn pair(v: Vec<f64>, what: &str) -> Result<[f64; 2]> {
    match v.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => bail!("{what}: expected 2 values, got {}", v.len()),
    }
}

fn triple(v: Vec<f64>, what: &str) -> Result<[f64; 3]> {
    match v.as_slice() {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => bail!("{what}: expected 3 values, got {}", v.len()),
    }
}

pub fn phantom(a: PhantomArgs, mut cfg: Resolver) -> Result<()> {
    let d = PhantomSpec::default();
    let seed = cfg.value("seed", a.seed, 0u64)?;
    let dims = dims3(&cfg.value("dims", a.dims, vec![20, 20, 20])?)?;
    let template = PhantomSpec {
        seed,
        semi_axes: triple(cfg.value("semi-axes", a.semi_axes, d.semi_axes.to_vec())?, "semi-axes")?,
        vein_radius: pair(cfg.value("vein-radius", a.vein_radius, d.vein_radius.to_vec())?, "vein-radius")?,
        vein_count: cfg.value("veins", a.veins, d.vein_count)?,
        jitter: cfg.value("jitter", a.jitter, d.jitter)?,
    };
    let mut rec = Recorder::new("phantom");
    rec.seed("seed", seed);

    if let Some(out) = a.out {
        let grid = synth_phantom(&template, dims)?;
        ensure_parent(&out)?;
        save_volume(&grid, &out)?;
        rec.lap("generate");
        rec.output(&out);
        return rec.write(&beside(&out), cfg.finish());
    }

    let dir = a.out_dir.expect("clap requires --out or --out-dir");
    let n_train = cfg.value("train", a.n_train, 15usize)?;
    let n_test = cfg.value("test", a.n_test, 5usize)?;
    for (sub, prefix, range) in [("train", "train", 0..n_train), ("test", "test", n_train..n_train + n_test)] {
        ensure_dir(&dir.join(sub))?;
        for i in range.clone() {
            let spec = PhantomSpec { seed: rng::mix(&[seed, i as u64]), ..template.clone() };
            let grid = synth_phantom(&spec, dims).with_context(|| format!("phantom {i}"))?;
            let path = dir.join(sub).join(format!("{prefix}-{:02}.avx", i - range.start));
            save_volume(&grid, &path)?;
            rec.output(path);
        }
    }
    rec.lap("generate");
    rec.write(&dir.join("manifest.json"), cfg.finish())
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    /// Input AVX1 files or directories of them.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output grid dimensions x,y,z [default: 20,20,20].
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Directory for the prepared volumes (same file names as the inputs).
    #[arg(long)]
    out_dir: PathBuf,
}

pub fn prep(a: PrepArgs, mut cfg: Resolver) -> Result<()> {
    let dims = dims3(&cfg.value("dims", a.dims, vec![20, 20, 20])?)?;
    let mut rec = Recorder::new("prep");
    let mut paths = Vec::new();
    for input in &a.inputs {
        if input.is_dir() {
            paths.extend(volume_paths(input)?);
        } else {
            paths.push(input.clone());
        }
    }
    let grids = paths
        .iter()
        .map(|p| load_volume(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    rec.lap("load");
    let prepared = prepare_dataset(&grids, dims)?;
    rec.lap("prepare");
    ensure_dir(&a.out_dir)?;
    for (src, grid) in paths.iter().zip(&prepared) {
        let out = a.out_dir.join(src.file_name().context("input path has no file name")?);
        if paths.iter().any(|p| p == &out) {
            bail!("output {} would overwrite an input", out.display());
        }
        save_volume(grid, &out)?;
        rec.input(src);
        rec.output(out);
    }
    rec.write(&a.out_dir.join("manifest.json"), cfg.finish())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Ground-truth AVX1 volume.
    #[arg(long)]
    truth: PathBuf,
    /// Surface vertices to visit [default: 100].
    #[arg(long)]
    points: Option<usize>,
    /// Recording radius around each visited vertex, in voxels [default: 1].
    #[arg(long)]
    threshold: Option<f64>,
    /// Acquisition seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Output point list, one `x y z` per line in grid coordinates.
    #[arg(long)]
    out: PathBuf,
}

pub fn simulate(a: SimulateArgs, mut cfg: Resolver) -> Result<()> {
    let sim = EamSimConfig {
        n_points: cfg.value("points", a.points, 100usize)?,
        threshold: cfg.value("threshold", a.threshold, 1.0f64)?,
        seed: cfg.value("seed", a.seed, 0u64)?,
    };
    let mut rec = Recorder::new("simulate");
    rec.seed("seed", sim.seed);
    let truth = load_volume(&a.truth).with_context(|| format!("loading {}", a.truth.display()))?;
    let cloud = simulate_acquisition(&truth, &sim)?;
    rec.lap("simulate");
    ensure_parent(&a.out)?;
    std::fs::write(&a.out, format_points(&cloud)).with_context(|| format!("writing {}", a.out.display()))?;
    log::info!("recorded {} points", cloud.len());
    rec.input(&a.truth);
    rec.output(&a.out);
    rec.write(&beside(&a.out), cfg.finish())
}
