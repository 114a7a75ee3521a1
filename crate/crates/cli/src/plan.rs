//! Online planning on one depth observation: background removal, offset
//! clustering, per-segment canonical alignment, hybrid proposals and joint
//! ranking by `P(T|G)·P(G)`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use taskgrasp_core::affordance::{joint_score, task_relevance_or, ContactHeatmap};
use taskgrasp_core::geom::distance::unsigned_distance;
use taskgrasp_core::geom::io::{write_atomic, write_ply, PlyData};
use taskgrasp_core::geom::{PointCloud, Pose9D, TriMesh, Vec3};
use taskgrasp_core::grasping::{close_fingers, propose_grasps, score_grasp, Grasp, GraspCodebook, GripperModel, ProposalSource};
use taskgrasp_core::nunocs::{predict_nunocs, CanonicalModel, NunocsPrediction, ScaleModel};
use taskgrasp_core::scenegen::{Dataset, Intrinsics};
use taskgrasp_core::segmentation::{cluster_offsets, noisy_offsets, order_by_visibility, SegmentResult};
use taskgrasp_core::{seed, Error, SCHEMA_VERSION};

use crate::config::Config;

/// Ablation switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanMode {
    /// Rank by `P(G)` alone (`P(T|G) = 1`).
    pub no_affordance: bool,
    /// Fit a single isotropic scale instead of per-axis scales.
    pub uniform_scale: bool,
}

/// Everything the planner reads about one observation, in the camera frame.
#[derive(Debug, Clone)]
pub struct Observation {
    /// Scene cloud with normals.
    pub cloud: PointCloud,
    /// Per-point centre offsets, aligned with `cloud`.
    pub offsets: Vec<Vec3>,
    pub intrinsics: Intrinsics,
    /// World up in the camera frame.
    pub up: Vec3,
    /// Known fixture whose points are background.
    pub bin: Option<TriMesh>,
}

impl Observation {
    pub fn from_dataset(d: &Dataset) -> Self {
        let to_cam = d.scene.camera.pose.inverse();
        Self {
            cloud: d.cloud.clone(),
            offsets: d.gt.offsets.clone(),
            intrinsics: d.scene.camera.intrinsics,
            up: d.scene.camera.up(),
            bin: d.scene.bin.map(|b| b.mesh().transformed(&to_cam)),
        }
    }
}

/// Read-only planning artifacts.
pub struct Artifacts<'a> {
    pub canon: &'a CanonicalModel,
    pub codebook: &'a GraspCodebook,
    pub heatmap: &'a ContactHeatmap,
    pub gripper: &'a GripperModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedGrasp {
    /// Camera frame.
    pub grasp: Grasp,
    pub p_g: f64,
    pub p_tgg: f64,
    pub joint: f64,
    /// Index into `PlanResult::segments`.
    pub segment: usize,
    pub source: ProposalSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentStatus {
    Planned,
    TooSmall,
    PredictionFailed,
    NoProposals,
    NotVisited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub points: usize,
    pub visibility: usize,
    pub status: SegmentStatus,
    /// ℂ → camera, when alignment succeeded.
    pub pose: Option<Pose9D>,
    pub prediction_score: Option<f64>,
    /// Candidates before the reachability and collision filters.
    pub candidates: usize,
    /// Candidates passing both filters.
    pub proposals: usize,
    /// Proposals that touch no point of the aligned template.
    pub no_model_contact: usize,
    pub ranked: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Ok,
    NoGraspFound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub schema_version: u32,
    pub status: PlanStatus,
    /// Index of the chosen grasp in `ranked` (always the first entry).
    pub chosen: Option<usize>,
    /// Sorted by joint score, then `P(G)`, both descending; remaining ties
    /// keep proposal order.
    pub ranked: Vec<RankedGrasp>,
    /// In segment-label order; `visit_order` lists the visiting sequence.
    pub segments: Vec<SegmentReport>,
    pub visit_order: Vec<usize>,
    pub background_points: usize,
    pub noise_points: usize,
}

impl PlanResult {
    pub fn chosen_grasp(&self) -> Option<&RankedGrasp> {
        self.chosen.map(|i| &self.ranked[i])
    }

    pub fn save(&self, path: &Path) -> taskgrasp_core::Result<()> {
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        write_atomic(path, &json)
    }
}

/// Planner internals kept for evaluation and debug export.
#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub result: PlanResult,
    /// Indices of the foreground points in the observation cloud.
    pub foreground: Vec<usize>,
    /// Clusters index into `foreground`.
    pub segmentation: SegmentResult,
    pub predictions: Vec<Option<NunocsPrediction>>,
}

impl PlanOutput {
    /// Observation-cloud indices of a segment's points.
    pub fn segment_points(&self, segment: usize) -> Vec<usize> {
        self.segmentation.clusters[segment].iter().map(|&i| self.foreground[i]).collect()
    }
}

/// The aligned template in the camera frame: mesh and cloud with normals.
pub fn template_in_camera(canon: &CanonicalModel, pose: &Pose9D) -> (TriMesh, PointCloud) {
    let mesh = canon.template_mesh.transformed9(pose);
    let points = canon.template.points.iter().map(|p| pose.transform_point(p)).collect();
    let normals = canon
        .template
        .normals
        .as_ref()
        .map(|ns| ns.iter().map(|n| pose.transform_normal(n)).collect());
    (mesh, PointCloud { points, normals })
}

pub fn plan(obs: &Observation, art: &Artifacts, cfg: &Config, mode: PlanMode, plan_seed: u64) -> anyhow::Result<PlanOutput> {
    if obs.offsets.len() != obs.cloud.len() {
        anyhow::bail!("{} offsets for {} points", obs.offsets.len(), obs.cloud.len());
    }
    let seg_cfg = &cfg.segmentation;
    let keep: Vec<bool> = match &obs.bin {
        Some(bin) => obs
            .cloud
            .points
            .par_iter()
            .map(|p| unsigned_distance(bin, p) > seg_cfg.background_margin)
            .collect(),
        None => vec![true; obs.cloud.len()],
    };
    let foreground: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
    let fg_cloud = obs.cloud.select(&foreground);
    let fg_offsets: Vec<Vec3> = foreground.iter().map(|&i| obs.offsets[i]).collect();
    let offsets = noisy_offsets(&fg_offsets, seg_cfg.offset_sigma, seed::split(plan_seed, "offset-noise"));
    let seg = cluster_offsets(&fg_cloud, &offsets, &seg_cfg.dbscan)?;
    let seg = order_by_visibility(seg, &fg_cloud, &obs.intrinsics);

    let mut align = cfg.alignment;
    if mode.uniform_scale {
        align.scale_model = ScaleModel::Uniform;
    }
    let no_contact = cfg.planning.no_contact_relevance;
    let mut reports: Vec<SegmentReport> = seg
        .clusters
        .iter()
        .zip(&seg.visibility)
        .map(|(c, &v)| SegmentReport {
            points: c.len(),
            visibility: v,
            status: SegmentStatus::NotVisited,
            pose: None,
            prediction_score: None,
            candidates: 0,
            proposals: 0,
            no_model_contact: 0,
            ranked: 0,
        })
        .collect();
    let mut predictions = vec![None; seg.clusters.len()];
    let mut ranked: Vec<RankedGrasp> = Vec::new();

    for &s in &seg.order {
        let report = &mut reports[s];
        if seg.clusters[s].len() < cfg.planning.min_segment_points {
            report.status = SegmentStatus::TooSmall;
            continue;
        }
        let segment = fg_cloud.select(&seg.clusters[s]);
        let seg_seed = seed::split_index(plan_seed, s as u64);
        align.seed = seed::split(seg_seed, "align");
        let pred = match predict_nunocs(&segment, art.canon, &align) {
            Ok(p) => p,
            Err(e @ (Error::PredictionFailure { .. } | Error::FitFailure { .. } | Error::InvalidInput(_))) => {
                log::info!("segment {s}: {e}");
                report.status = SegmentStatus::PredictionFailed;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        report.pose = Some(pred.pose);
        report.prediction_score = Some(pred.score);
        let (tmpl_mesh, tmpl_cloud) = template_in_camera(art.canon, &pred.pose);
        let proposals = propose_grasps(
            &segment,
            Some(&pred.pose),
            Some(art.codebook),
            art.gripper,
            &obs.cloud,
            &obs.up,
            &cfg.proposal,
            seed::split(seg_seed, "propose"),
        )?;
        report.candidates = art.codebook.len() + cfg.proposal.direct_grasps;
        report.proposals = proposals.len();
        let score_seed = seed::split(seg_seed, "score");
        let scored: Vec<Option<RankedGrasp>> = proposals
            .par_iter()
            .enumerate()
            .map(|(k, prop)| {
                if close_fingers(&tmpl_cloud.points, &prop.grasp, art.gripper).all_contacts().is_empty() {
                    return None;
                }
                let p_g = score_grasp(
                    &tmpl_mesh,
                    &tmpl_cloud,
                    &prop.grasp,
                    art.gripper,
                    &cfg.planning.perturb,
                    seed::split_index(score_seed, k as u64),
                );
                let p_tgg = if mode.no_affordance {
                    1.0
                } else {
                    task_relevance_or(&prop.grasp, &pred.pose, art.heatmap, art.gripper, no_contact)
                };
                Some(RankedGrasp {
                    grasp: Grasp { quality: p_g, ..prop.grasp },
                    p_g,
                    p_tgg,
                    joint: joint_score(p_g, p_tgg),
                    segment: s,
                    source: prop.source,
                })
            })
            .collect();
        report.no_model_contact = scored.iter().filter(|r| r.is_none()).count();
        let before = ranked.len();
        ranked.extend(scored.into_iter().flatten());
        report.ranked = ranked.len() - before;
        report.status = if report.ranked > 0 {
            SegmentStatus::Planned
        } else {
            SegmentStatus::NoProposals
        };
        predictions[s] = Some(pred);
        if !cfg.planning.exhaustive && !ranked.is_empty() {
            break;
        }
    }

    // stable sort: equal (joint, P(G)) keep proposal order
    ranked.sort_by(|a, b| b.joint.total_cmp(&a.joint).then(b.p_g.total_cmp(&a.p_g)));
    if cfg.planning.max_ranked > 0 {
        ranked.truncate(cfg.planning.max_ranked);
    }
    let status = if ranked.is_empty() {
        PlanStatus::NoGraspFound
    } else {
        PlanStatus::Ok
    };
    let result = PlanResult {
        schema_version: SCHEMA_VERSION,
        status,
        chosen: (!ranked.is_empty()).then_some(0),
        ranked,
        segments: reports,
        visit_order: seg.order.clone(),
        background_points: obs.cloud.len() - foreground.len(),
        noise_points: seg.noise_count(),
    };
    Ok(PlanOutput {
        result,
        foreground,
        segmentation: seg,
        predictions,
    })
}

/// Segment labels, aligned templates and scored proposal origins.
pub fn export_debug(dir: &Path, obs: &Observation, out: &PlanOutput, canon: &CanonicalModel) -> taskgrasp_core::Result<()> {
    std::fs::create_dir_all(dir)?;
    let fg = obs.cloud.select(&out.foreground);
    out.segmentation.save(dir, &fg)?;
    for (s, report) in out.result.segments.iter().enumerate() {
        if let Some(pose) = &report.pose {
            let (_, cloud) = template_in_camera(canon, pose);
            write_ply(&dir.join(format!("segment_{s:03}_template.ply")), &PlyData::from_cloud(&cloud), true)?;
        }
    }
    let ranked = &out.result.ranked;
    let ply = PlyData::from_cloud(&PointCloud::new(ranked.iter().map(|r| r.grasp.pose.translation).collect()))
        .with_scalar("p_g", ranked.iter().map(|r| r.p_g).collect())
        .with_scalar("p_tgg", ranked.iter().map(|r| r.p_tgg).collect())
        .with_scalar("joint", ranked.iter().map(|r| r.joint).collect())
        .with_scalar("segment", ranked.iter().map(|r| r.segment as f64).collect());
    write_ply(&dir.join("proposals.ply"), &ply, false)
}
