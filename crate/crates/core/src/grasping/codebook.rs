use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{sample_grasps, score_grasp, Grasp, GripperModel, PerturbParams, SampleParams};
use crate::geom::io::write_atomic;
use crate::geom::{poisson_disk_sample, TriMesh};
use crate::nunocs::store::check_schema;
use crate::nunocs::CanonicalModel;
use crate::{seed, Error, Result, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookParams {
    pub grasps_per_instance: usize,
    /// Grasps scoring below this are dropped.
    pub keep_threshold: f64,
    /// Poisson-disk radius of the per-instance clouds, metres.
    pub sample_radius: f64,
    pub sample: SampleParams,
    pub perturb: PerturbParams,
}

impl Default for CodebookParams {
    fn default() -> Self {
        Self {
            grasps_per_instance: 200,
            keep_threshold: 0.5,
            sample_radius: 0.002,
            sample: SampleParams::default(),
            perturb: PerturbParams::default(),
        }
    }
}

/// A grasp expressed in ℂ, with the instance it was learned on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodebookEntry {
    pub instance: String,
    pub grasp: Grasp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceStats {
    pub instance: String,
    pub sampled: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspCodebook {
    pub schema_version: u32,
    pub category: String,
    pub seed: u64,
    pub entries: Vec<CodebookEntry>,
    pub stats: Vec<InstanceStats>,
}

impl GraspCodebook {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        write_atomic(path, &json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let book: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        check_schema(&path.display().to_string(), book.schema_version)?;
        Ok(book)
    }
}

/// Samples, scores and filters grasps on every training instance and stores
/// the survivors in ℂ. `models[i]` is the instance `canon.instance_ids[i]`,
/// in metres.
pub fn build_codebook(
    canon: &CanonicalModel,
    models: &[TriMesh],
    gripper: &GripperModel,
    params: &CodebookParams,
    seed: u64,
) -> Result<GraspCodebook> {
    if models.len() != canon.instance_ids.len() {
        return Err(Error::InvalidInput(format!(
            "{} models for {} canonical instances",
            models.len(),
            canon.instance_ids.len()
        )));
    }
    let mut entries = Vec::new();
    let mut stats = Vec::new();
    for (i, (id, mesh)) in canon.instance_ids.iter().zip(models).enumerate() {
        let inst_seed = seed::split_index(seed::split(seed, "codebook"), i as u64);
        let cloud = poisson_disk_sample(mesh, params.sample_radius, seed::split(inst_seed, "cloud"))?;
        let (grasps, _) = sample_grasps(
            &cloud,
            gripper,
            params.grasps_per_instance,
            &params.sample,
            seed::split(inst_seed, "sample"),
        )?;
        let to_canon = canon.instance_to_canonical(id)?;
        let score_seed = seed::split(inst_seed, "score");
        let mut kept = 0;
        for (k, g) in grasps.iter().enumerate() {
            let q = score_grasp(mesh, &cloud, g, gripper, &params.perturb, seed::split_index(score_seed, k as u64));
            if q >= params.keep_threshold {
                kept += 1;
                let scored = Grasp { quality: q, ..*g };
                entries.push(CodebookEntry {
                    instance: id.clone(),
                    grasp: scored.mapped(&to_canon, gripper),
                });
            }
        }
        if kept == 0 {
            log::warn!("codebook: instance {id} kept no grasps; skipped");
        } else {
            log::info!("codebook: instance {id}: kept {kept} of {} grasps", grasps.len());
        }
        stats.push(InstanceStats {
            instance: id.clone(),
            sampled: grasps.len(),
            kept,
        });
    }
    if entries.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    Ok(GraspCodebook {
        schema_version: SCHEMA_VERSION,
        category: canon.category.clone(),
        seed,
        entries,
        stats,
    })
}
