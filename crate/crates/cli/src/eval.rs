//! Repeated-picking evaluation against ground truth. Each pick plans on the
//! current observation, identifies the targeted instance from the chosen
//! segment's ground-truth labels, classifies the grasp as a failure, a
//! stable but task-irrelevant grasp, or a task-relevant grasp, removes the
//! instance and re-renders the remaining pile.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use taskgrasp_core::affordance::{placement_check, PlacementTask};
use taskgrasp_core::geom::{poisson_disk_sample, TriMesh, Vec3};
use taskgrasp_core::grasping::{grasp_oracle, Grasp};
use taskgrasp_core::nunocs::CanonicalModel;
use taskgrasp_core::scenegen::{load_dataset, render_depth, Dataset, GroundTruth, Scene, SCENE_JSON};
use taskgrasp_core::{seed, SCHEMA_VERSION};

use crate::config::Config;
use crate::plan::{plan, Artifacts, Observation, PlanMode, PlanOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PickOutcome {
    /// The planner returned nothing.
    NoGrasp,
    /// The chosen grasp does not lift its target (or targets the bin).
    Failure,
    /// Stable, but the placement fails.
    TaskIrrelevant,
    /// Stable and placeable.
    TaskRelevant,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub no_grasp: usize,
    pub failure: usize,
    pub task_irrelevant: usize,
    pub task_relevant: usize,
}

impl OutcomeCounts {
    pub fn add(&mut self, o: PickOutcome) {
        match o {
            PickOutcome::NoGrasp => self.no_grasp += 1,
            PickOutcome::Failure => self.failure += 1,
            PickOutcome::TaskIrrelevant => self.task_irrelevant += 1,
            PickOutcome::TaskRelevant => self.task_relevant += 1,
        }
    }

    /// Attempts that executed a grasp.
    pub fn attempts(&self) -> usize {
        self.failure + self.task_irrelevant + self.task_relevant
    }

    pub fn task_relevant_rate(&self) -> f64 {
        ratio(self.task_relevant, self.attempts())
    }

    pub fn stable_rate(&self) -> f64 {
        ratio(self.task_irrelevant + self.task_relevant, self.attempts())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickRecord {
    pub pick: usize,
    pub outcome: PickOutcome,
    pub model_id: Option<String>,
    pub p_g: Option<f64>,
    pub p_tgg: Option<f64>,
    /// Mean ℂ distance between predicted and true coordinates of the
    /// chosen segment's points.
    pub nunocs_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub scene: String,
    pub instances: usize,
    pub picks: Vec<PickRecord>,
    pub counts: OutcomeCounts,
    pub mean_nunocs_error: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub max: Option<f64>,
}

impl ErrorStats {
    pub fn from_values(mut v: Vec<f64>) -> Self {
        if v.is_empty() {
            return Self::default();
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Self {
            count: n,
            mean: Some(v.iter().sum::<f64>() / n as f64),
            median: Some(median),
            max: v.last().copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub mode: PlanMode,
    pub scenes: Vec<SceneReport>,
    /// Outcome counts per model id.
    pub per_model: BTreeMap<String, OutcomeCounts>,
    pub totals: OutcomeCounts,
    pub task_relevant_rate: f64,
    pub stable_rate: f64,
    pub nunocs_error: ErrorStats,
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> taskgrasp_core::Result<()> {
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        taskgrasp_core::geom::io::write_atomic(path, &json)
    }
}

/// Scene directories (containing `scene.json`) directly under `dir`,
/// sorted by name.
pub fn scene_dirs(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading dataset {}", dir.display()))? {
        let p = entry?.path();
        if p.join(SCENE_JSON).is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Ground-truth coordinates of observation points, expressed in the
/// template's ℂ when the instance's model is part of the canonical model.
pub fn truth_in_template(gt: &GroundTruth, points: &[usize], model_id: &str, canon: &CanonicalModel) -> Vec<Vec3> {
    let reg = canon.instance_poses.get(model_id);
    points
        .iter()
        .map(|&i| match reg {
            Some(r) => r.transform_point(&gt.nunocs[i]),
            None => gt.nunocs[i],
        })
        .collect()
}

/// Most frequent ground-truth label among `points` (ties to the lower id).
pub fn majority_label(gt: &GroundTruth, points: &[usize]) -> i32 {
    let mut counts = BTreeMap::<i32, usize>::new();
    for &i in points {
        *counts.entry(gt.point_ids[i]).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map_or(-1, |(l, _)| l)
}

/// A camera-frame grasp expressed in the frame of instance `t`'s scaled
/// model.
pub fn grasp_in_instance(scene: &Scene, t: usize, grasp: &Grasp) -> Grasp {
    let cam_from_obj = scene.camera.pose.inverse().compose(&scene.instances[t].pose);
    grasp.transformed(&cam_from_obj.inverse())
}

/// Ground-truth context for classifying picks in one scene.
pub struct Judge<'a> {
    pub models: &'a BTreeMap<String, TriMesh>,
    pub tasks: &'a BTreeMap<String, PlacementTask>,
    pub sample_radius: f64,
}

impl Judge<'_> {
    /// Classifies the chosen grasp of `out` on the observation described by
    /// `scene` and `gt`. Returns the outcome and the targeted instance.
    pub fn classify(&self, scene: &Scene, gt: &GroundTruth, out: &PlanOutput, gripper: &taskgrasp_core::grasping::GripperModel) -> anyhow::Result<(PickOutcome, Option<usize>)> {
        let Some(chosen) = out.result.chosen_grasp() else {
            return Ok((PickOutcome::NoGrasp, None));
        };
        let target = majority_label(gt, &out.segment_points(chosen.segment));
        if target < 0 {
            return Ok((PickOutcome::Failure, None));
        }
        let t = target as usize;
        let inst = &scene.instances[t];
        let model = self
            .models
            .get(&inst.model_id)
            .with_context(|| format!("scene instance uses unknown model {:?}", inst.model_id))?;
        let object = model.scaled(&inst.scale);
        let grasp = grasp_in_instance(scene, t, &chosen.grasp);
        let cloud = poisson_disk_sample(&object, self.sample_radius, 0)?;
        let lift = grasp_oracle(&object, &cloud, &grasp, gripper);
        if !lift.success {
            return Ok((PickOutcome::Failure, Some(t)));
        }
        let task = self
            .tasks
            .get(&inst.model_id)
            .with_context(|| format!("no placement task for model {:?}", inst.model_id))?
            .scaled(&inst.scale);
        let width = lift.closing_width.unwrap_or(grasp.width);
        let placed = placement_check(&object, &grasp, width, gripper, &task);
        Ok((
            if placed {
                PickOutcome::TaskRelevant
            } else {
                PickOutcome::TaskIrrelevant
            },
            Some(t),
        ))
    }
}

/// Repeated picking on one scene.
pub fn eval_scene(
    name: &str,
    data: &Dataset,
    art: &Artifacts,
    judge: &Judge,
    cfg: &Config,
    mode: PlanMode,
    scene_seed: u64,
) -> anyhow::Result<SceneReport> {
    let mut scene = data.scene.clone();
    let mut current = data.clone();
    let max_picks = if cfg.eval.max_picks == 0 {
        scene.instances.len()
    } else {
        cfg.eval.max_picks.min(scene.instances.len())
    };
    let mut picks = Vec::new();
    let mut counts = OutcomeCounts::default();
    for pick in 0..max_picks {
        if pick > 0 {
            let r = render_depth(&scene, judge.models)?;
            current = Dataset {
                scene: scene.clone(),
                depth: r.depth,
                cloud: r.cloud,
                gt: r.gt,
            };
        }
        let obs = Observation::from_dataset(&current);
        let out = plan(&obs, art, cfg, mode, seed::split_index(scene_seed, pick as u64))?;
        let (outcome, target) = judge.classify(&scene, &current.gt, &out, art.gripper)?;
        let chosen = out.result.chosen_grasp();
        let nunocs_error = match (chosen, target) {
            (Some(c), Some(t)) => out.predictions[c.segment].as_ref().map(|pred| {
                let pts = out.segment_points(c.segment);
                let truth = truth_in_template(&current.gt, &pts, &scene.instances[t].model_id, art.canon);
                art.canon.symmetry().mean_error(&pred.points, &truth)
            }),
            _ => None,
        };
        counts.add(outcome);
        picks.push(PickRecord {
            pick,
            outcome,
            model_id: target.map(|t| scene.instances[t].model_id.clone()),
            p_g: chosen.map(|c| c.p_g),
            p_tgg: chosen.map(|c| c.p_tgg),
            nunocs_error,
        });
        match target {
            Some(t) => {
                scene.instances.remove(t);
            }
            None => break,
        }
        if scene.instances.is_empty() {
            break;
        }
    }
    let errs: Vec<f64> = picks.iter().filter_map(|p| p.nunocs_error).collect();
    Ok(SceneReport {
        scene: name.to_string(),
        instances: data.scene.instances.len(),
        mean_nunocs_error: (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64),
        picks,
        counts,
    })
}

pub fn eval_dataset(dir: &Path, art: &Artifacts, judge: &Judge, cfg: &Config, mode: PlanMode) -> anyhow::Result<EvalReport> {
    let mut scenes = Vec::new();
    let eval_seed = seed::split(cfg.seed, "eval");
    for (k, sdir) in scene_dirs(dir)?.iter().enumerate() {
        let name = sdir.file_name().and_then(|s| s.to_str()).unwrap_or("scene").to_string();
        let data = load_dataset(sdir).with_context(|| format!("loading scene {}", sdir.display()))?;
        log::info!("eval: scene {name}");
        scenes.push(eval_scene(&name, &data, art, judge, cfg, mode, seed::split_index(eval_seed, k as u64))?);
    }
    let mut per_model: BTreeMap<String, OutcomeCounts> = BTreeMap::new();
    let mut totals = OutcomeCounts::default();
    let mut errors = Vec::new();
    for s in &scenes {
        for p in &s.picks {
            totals.add(p.outcome);
            if let Some(m) = &p.model_id {
                per_model.entry(m.clone()).or_default().add(p.outcome);
            }
            errors.extend(p.nunocs_error);
        }
    }
    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        mode,
        task_relevant_rate: totals.task_relevant_rate(),
        stable_rate: totals.stable_rate(),
        scenes,
        per_model,
        totals,
        nunocs_error: ErrorStats::from_values(errors),
    })
}
