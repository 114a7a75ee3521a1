//! One function per subcommand. All of them write their outputs
//! atomically and derive every seed from `Config::seed`.

use std::path::Path;

use anyhow::Context;
use taskgrasp_core::affordance::{aggregate_heatmaps, discover_heatmap, ContactHeatmap};
use taskgrasp_core::geom::poisson_disk_sample;
use taskgrasp_core::grasping::{self, sample_grasps, GraspCodebook, GripperModel};
use taskgrasp_core::nunocs::store::{load_canonical, save_canonical};
use taskgrasp_core::nunocs::{build_canonical_named, CanonicalModel};
use taskgrasp_core::scenegen::{generate_scene, load_dataset, render_depth, save_dataset};
use taskgrasp_core::seed;

use crate::artifacts::{aligned_models, load_models, load_tasks};
use crate::config::Config;
use crate::eval::{eval_dataset, EvalReport, Judge};
use crate::plan::{export_debug, plan, Artifacts, Observation, PlanMode, PlanResult};

pub fn gripper(cfg: &Config, dir: Option<&Path>) -> anyhow::Result<GripperModel> {
    Ok(match dir {
        Some(d) => GripperModel::load(d)?,
        None => GripperModel::new(cfg.gripper)?,
    })
}

pub fn build_canonical(cfg: &Config, models_dir: &Path, out: &Path) -> anyhow::Result<CanonicalModel> {
    let models = load_models(models_dir, cfg.models.scale_to_m)?;
    let ids: Vec<String> = models.keys().cloned().collect();
    let meshes: Vec<_> = models.into_values().collect();
    let params = taskgrasp_core::nunocs::CanonicalParams {
        seed: seed::split(cfg.seed, "canonical"),
        ..cfg.canonical
    };
    let canon = build_canonical_named(&cfg.models.category, &ids, &meshes, &params)?;
    log::info!(
        "canonical: template {} of {} instances",
        canon.instance_ids[canon.template_index],
        ids.len()
    );
    save_canonical(out, &canon)?;
    Ok(canon)
}

pub fn build_codebook(cfg: &Config, models_dir: &Path, canonical: &Path, grip: &GripperModel, out: &Path) -> anyhow::Result<GraspCodebook> {
    let models = load_models(models_dir, cfg.models.scale_to_m)?;
    let canon = load_canonical(canonical)?;
    let meshes = aligned_models(&models, &canon.instance_ids)?;
    let book = grasping::build_codebook(&canon, &meshes, grip, &cfg.codebook, seed::split(cfg.seed, "codebook"))?;
    log::info!("codebook: {} grasps", book.len());
    book.save(out)?;
    Ok(book)
}

/// Discovers a heatmap on every canonical instance with its placement task
/// and aggregates them onto the template.
#[allow(clippy::too_many_arguments)]
pub fn build_heatmap(
    cfg: &Config,
    models_dir: &Path,
    canonical: &Path,
    codebook: Option<&Path>,
    task: &Path,
    grip: &GripperModel,
    out: &Path,
    debug_dir: Option<&Path>,
) -> anyhow::Result<ContactHeatmap> {
    let models = load_models(models_dir, cfg.models.scale_to_m)?;
    let canon = load_canonical(canonical)?;
    let book = codebook.map(GraspCodebook::load).transpose()?;
    let tasks = load_tasks(task, &canon.instance_ids)?;
    let hcfg = &cfg.heatmap;
    let root = seed::split(cfg.seed, "heatmap");
    let mut per_instance = Vec::new();
    for (i, id) in canon.instance_ids.iter().enumerate() {
        let mesh = models.get(id).with_context(|| format!("canonical instance {id:?} has no model file"))?;
        let inst_seed = seed::split_index(root, i as u64);
        let cloud = poisson_disk_sample(mesh, hcfg.sample_radius, seed::split(inst_seed, "cloud"))?;
        let (mut grasps, _) = sample_grasps(&cloud, grip, hcfg.grasps_per_instance, &hcfg.sample, seed::split(inst_seed, "sample"))?;
        if let (true, Some(book)) = (hcfg.include_codebook, &book) {
            let to_canon = canon.instance_to_canonical(id)?;
            grasps.extend(book.entries.iter().map(|e| e.grasp.unmapped(&to_canon, grip)));
        }
        let hm = discover_heatmap(mesh, &cloud, &grasps, grip, &tasks[id])?;
        if let Some(d) = debug_dir {
            hm.save(&d.join("heatmaps").join(id), &canon.category, id)?;
        }
        per_instance.push((id.clone(), hm));
    }
    let agg = aggregate_heatmaps(&per_instance, &canon)?;
    agg.save(out, &canon.category, "canonical")?;
    Ok(agg)
}

pub fn gen_scenes(cfg: &Config, models_dir: &Path, n: usize, out: &Path) -> anyhow::Result<()> {
    let models = load_models(models_dir, cfg.models.scale_to_m)?;
    let root = seed::split(cfg.seed, "scenes");
    std::fs::create_dir_all(out)?;
    for k in 0..n {
        let scene = generate_scene(&models, &cfg.scenes, seed::split_index(root, k as u64))?;
        let rendered = render_depth(&scene, &models)?;
        save_dataset(&out.join(format!("scene_{k:04}")), &scene, &rendered)?;
        log::info!("scene {k}: {} instances, {} points", scene.instances.len(), rendered.cloud.len());
    }
    Ok(())
}

/// Paths of the planning artifacts.
pub struct ArtifactPaths<'a> {
    pub canonical: &'a Path,
    pub codebook: &'a Path,
    /// Required unless affordance is disabled.
    pub heatmap: Option<&'a Path>,
}

pub struct LoadedArtifacts {
    pub canon: CanonicalModel,
    pub codebook: GraspCodebook,
    pub heatmap: ContactHeatmap,
}

impl LoadedArtifacts {
    pub fn load(paths: &ArtifactPaths, mode: PlanMode) -> anyhow::Result<Self> {
        let canon = load_canonical(paths.canonical)?;
        let codebook = GraspCodebook::load(paths.codebook)?;
        let heatmap = match paths.heatmap {
            Some(p) => ContactHeatmap::load(p)?,
            None if mode.no_affordance => ContactHeatmap::constant(canon.template.as_cloud(), 1.0),
            None => anyhow::bail!("a heatmap is required unless affordance is disabled"),
        };
        if heatmap.len() != canon.template.len() {
            anyhow::bail!(
                "heatmap has {} points but the canonical template has {}",
                heatmap.len(),
                canon.template.len()
            );
        }
        Ok(Self { canon, codebook, heatmap })
    }

    pub fn view<'a>(&'a self, gripper: &'a GripperModel) -> Artifacts<'a> {
        Artifacts {
            canon: &self.canon,
            codebook: &self.codebook,
            heatmap: &self.heatmap,
            gripper,
        }
    }
}

pub fn plan_scene(
    cfg: &Config,
    scene_dir: &Path,
    paths: &ArtifactPaths,
    grip: &GripperModel,
    mode: PlanMode,
    out: &Path,
    debug_dir: Option<&Path>,
) -> anyhow::Result<PlanResult> {
    let arts = LoadedArtifacts::load(paths, mode)?;
    let data = load_dataset(scene_dir)?;
    let obs = Observation::from_dataset(&data);
    let output = plan(&obs, &arts.view(grip), cfg, mode, seed::split(cfg.seed, "plan"))?;
    if let Some(d) = debug_dir {
        export_debug(d, &obs, &output, &arts.canon)?;
    }
    output.result.save(out)?;
    Ok(output.result)
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    cfg: &Config,
    dataset: &Path,
    models_dir: &Path,
    task: &Path,
    paths: &ArtifactPaths,
    grip: &GripperModel,
    mode: PlanMode,
    report: &Path,
) -> anyhow::Result<EvalReport> {
    let arts = LoadedArtifacts::load(paths, mode)?;
    let models = load_models(models_dir, cfg.models.scale_to_m)?;
    let tasks = load_tasks(task, models.keys())?;
    let judge = Judge {
        models: &models,
        tasks: &tasks,
        sample_radius: cfg.eval.sample_radius,
    };
    let r = eval_dataset(dataset, &arts.view(grip), &judge, cfg, mode)?;
    r.save(report)?;
    Ok(r)
}
