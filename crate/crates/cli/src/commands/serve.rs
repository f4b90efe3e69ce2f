use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use atriamap_core::TrainedModel;
use atriamap_service::{router, AppState};
use clap::Args;

use super::ensure_dir;
use crate::config::Resolver;
use crate::manifest::Recorder;

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Model to host as ID=PATH (repeatable).
    #[arg(long = "model", value_name = "ID=PATH")]
    models: Vec<String>,
    /// Host every .arbm / .avae file in DIR under its file stem.
    #[arg(long)]
    models_dir: Option<PathBuf>,
    /// Listen address; port 0 picks a free port [default: 127.0.0.1:8080].
    #[arg(long)]
    addr: Option<String>,
    /// Serve files from DIR for paths outside /v1 (the web UI build).
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// On shutdown, write every session and a manifest to DIR.
    #[arg(long)]
    snapshot_dir: Option<PathBuf>,
}

fn collect_models(a: &ServeArgs, rec: &mut Recorder) -> Result<BTreeMap<String, TrainedModel>> {
    let mut entries: Vec<(String, PathBuf)> = Vec::new();
    for spec in &a.models {
        let Some((id, path)) = spec.split_once('=') else {
            bail!("--model expects ID=PATH, got {spec:?}");
        };
        entries.push((id.to_string(), PathBuf::from(path)));
    }
    if let Some(dir) = &a.models_dir {
        let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
            .with_context(|| format!("listing {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "arbm" || e == "avae"))
            .collect();
        found.sort();
        for path in found {
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            entries.push((id, path));
        }
    }
    if entries.is_empty() {
        bail!("no models: pass --model ID=PATH or --models-dir DIR");
    }
    let mut models = BTreeMap::new();
    for (id, path) in entries {
        let model = TrainedModel::load(&path).with_context(|| format!("loading model {}", path.display()))?;
        log::info!("model {id}: {} {:?}", model.kind(), model.dims());
        rec.input(&path);
        if models.insert(id.clone(), model).is_some() {
            bail!("model id {id:?} given twice");
        }
    }
    Ok(models)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(e) => {
                log::warn!("cannot listen for SIGTERM: {e}");
                std::future::pending::<()>().await;
            }
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    log::info!("shutting down");
}

pub fn run(a: ServeArgs, mut cfg: Resolver) -> Result<()> {
    let addr = cfg.value("addr", a.addr.clone(), "127.0.0.1:8080".to_string())?;
    let mut rec = Recorder::new("serve");
    let models = collect_models(&a, &mut rec)?;
    rec.lap("load");
    let state = Arc::new(AppState::new(models));
    let app = router(state.clone(), a.static_dir.clone());

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        let local = listener.local_addr()?;
        println!("listening on http://{local}");
        std::io::stdout().flush()?;
        axum::serve(listener, app).with_graceful_shutdown(shutdown_signal()).await?;
        anyhow::Ok(())
    })?;
    rec.lap("serve");

    if let Some(dir) = &a.snapshot_dir {
        ensure_dir(dir)?;
        let n = state.snapshot_to(dir).with_context(|| format!("writing snapshots to {}", dir.display()))?;
        log::info!("wrote {n} session snapshots");
        let mut files = Vec::new();
        for entry in std::fs::read_dir(dir)?.flatten() {
            if entry.path().is_dir() {
                files.extend(std::fs::read_dir(entry.path())?.flatten().map(|f| f.path()));
            }
        }
        files.sort();
        files.into_iter().for_each(|f| rec.output(f));
        rec.write(&dir.join("manifest.json"), cfg.finish())?;
    }
    Ok(())
}
