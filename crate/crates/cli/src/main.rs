mod commands;
mod config;
mod files;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use atriamap_core::{EvalError, GeometryError, RbmError, VaeError, VolumeError};
use clap::Parser;

/// Probabilistic chamber-surface reconstruction from sparse point clouds.
///
/// Every command writes a `manifest.json` (or `<output>.manifest.json`)
/// recording resolved settings, seeds, checksums and wall times.
#[derive(Debug, Parser)]
#[command(name = "atriamap", version)]
struct Cli {
    /// Worker threads for parallel stages (default: one per core).
    #[arg(long, global = true, env = "ATRIAMAP_THREADS")]
    threads: Option<usize>,

    /// File of `key = value` lines supplying defaults for any long flag
    /// (flags given on the command line win).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: commands::Command,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ATRIAMAP_LOG", "warn")).init();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return report(&anyhow::anyhow!("--threads {n}: {e}"), "cli");
        }
    }
    let name = cli.command.name();
    match commands::run(cli.command, cli.config.as_deref()) {
        Ok(code) => code,
        Err(e) => report(&e, name),
    }
}

/// Pipeline stage behind an error, from the first typed error in its chain.
fn stage(err: &anyhow::Error) -> Option<&'static str> {
    err.chain().find_map(|cause| {
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            Some(e.stage())
        } else if cause.is::<GeometryError>() {
            Some("geometry")
        } else if cause.is::<RbmError>() || cause.is::<VaeError>() {
            Some("model")
        } else if cause.is::<VolumeError>() {
            Some("volume")
        } else if cause.is::<std::io::Error>() {
            Some("io")
        } else {
            None
        }
    })
}

fn report(err: &anyhow::Error, command: &str) -> ExitCode {
    let body = serde_json::json!({
        "error": {
            "command": command,
            "stage": stage(err).unwrap_or(command),
            "message": format!("{err:#}"),
        }
    });
    eprintln!("{body}");
    ExitCode::FAILURE
}
