//! Loading of model collections and placement tasks.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use taskgrasp_core::affordance::PlacementTask;
use taskgrasp_core::geom::{load_mesh, TriMesh};

/// Every `*.obj` / `*.ply` in `dir`, keyed by file stem (sorted).
pub fn load_models(dir: &Path, scale_to_m: f64) -> anyhow::Result<BTreeMap<String, TriMesh>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading model directory {}", dir.display()))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("obj" | "ply")) {
            continue;
        }
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .context("model file name is not UTF-8")?
            .to_string();
        let mesh = load_mesh(&path, scale_to_m)?;
        if out.insert(id.clone(), mesh).is_some() {
            anyhow::bail!("two model files share the id {id:?}");
        }
    }
    if out.is_empty() {
        anyhow::bail!("no .obj or .ply models in {}", dir.display());
    }
    Ok(out)
}

/// A task file shared by every model, or a directory holding `<id>.json`
/// per model.
pub fn load_tasks<'a>(path: &Path, ids: impl IntoIterator<Item = &'a String>) -> anyhow::Result<BTreeMap<String, PlacementTask>> {
    let mut out = BTreeMap::new();
    if path.is_dir() {
        for id in ids {
            let file = path.join(format!("{id}.json"));
            let task = PlacementTask::load(&file).with_context(|| format!("loading task for model {id:?}"))?;
            out.insert(id.clone(), task);
        }
    } else {
        let task = PlacementTask::load(path).with_context(|| format!("loading task {}", path.display()))?;
        for id in ids {
            out.insert(id.clone(), task.clone());
        }
    }
    Ok(out)
}

/// Models aligned with the canonical model's instance order.
pub fn aligned_models(models: &BTreeMap<String, TriMesh>, ids: &[String]) -> anyhow::Result<Vec<TriMesh>> {
    ids.iter()
        .map(|id| {
            models
                .get(id)
                .cloned()
                .with_context(|| format!("canonical instance {id:?} has no model file"))
        })
        .collect()
}
