use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_grasps, Grasp, GraspCodebook, GripperModel, SampleParams};
use crate::geom::{Aabb, PointCloud, Pose9D, Vec3};
use crate::{seed, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProposalParams {
    /// Grasps sampled directly on the segment in addition to the codebook.
    pub direct_grasps: usize,
    /// Largest allowed angle between the approach axis and straight down.
    pub max_approach_deg: f64,
    /// Length of the straight pre-grasp path swept backwards from the grasp.
    pub approach_distance: f64,
    /// Scene points closer than this to the swept gripper count as collisions.
    pub collision_margin: f64,
    pub sample: SampleParams,
}

impl Default for ProposalParams {
    fn default() -> Self {
        Self {
            direct_grasps: 50,
            max_approach_deg: 75.0,
            approach_distance: 0.05,
            collision_margin: 0.0005,
            sample: SampleParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalSource {
    /// Index into the codebook entries.
    Codebook(usize),
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub grasp: Grasp,
    pub source: ProposalSource,
}

/// Whether the approach axis is within `max_deg` of `−up`.
pub fn reachable(grasp: &Grasp, gripper: &GripperModel, up: &Vec3, max_deg: f64) -> bool {
    let down = -up.normalize();
    grasp.approach_axis(gripper).dot(&down) >= max_deg.to_radians().cos()
}

/// Whether any scene point lies in the open gripper swept back along its
/// approach path. Part boxes are the gripper-frame bounds of the meshes.
pub fn collides_with_cloud(grasp: &Grasp, gripper: &GripperModel, scene: &[Vec3], approach_distance: f64, margin: f64) -> bool {
    let back = -gripper.approach() * approach_distance;
    let swept: Vec<Aabb> = gripper
        .open_boxes(grasp.width)
        .iter()
        .map(|b| {
            let mut s = *b;
            s.grow(&(b.min + back));
            s.grow(&(b.max + back));
            s.inflated(margin)
        })
        .collect();
    let inv = grasp.pose.inverse();
    scene.iter().any(|p| {
        let l = inv.transform_point(p);
        swept.iter().any(|b| b.contains(&l))
    })
}

/// Candidate grasps for one segment, in the camera frame: the codebook
/// mapped through the predicted ℂ → camera pose (if any) followed by direct
/// samples on the segment. Only reachable, collision-free grasps are kept;
/// order is codebook order then sampling order.
#[allow(clippy::too_many_arguments)]
pub fn propose_grasps(
    segment: &PointCloud,
    pose: Option<&Pose9D>,
    codebook: Option<&GraspCodebook>,
    gripper: &GripperModel,
    scene: &PointCloud,
    up: &Vec3,
    params: &ProposalParams,
    seed: u64,
) -> Result<Vec<Proposal>> {
    let mut candidates = Vec::new();
    if let (Some(pose), Some(book)) = (pose, codebook) {
        for (i, e) in book.entries.iter().enumerate() {
            let mut g = e.grasp.mapped(pose, gripper);
            g.width = g.width.min(gripper.params.max_opening);
            candidates.push(Proposal {
                grasp: g,
                source: ProposalSource::Codebook(i),
            });
        }
    }
    if params.direct_grasps > 0 && segment.normals.is_some() && !segment.is_empty() {
        let (direct, _) = sample_grasps(segment, gripper, params.direct_grasps, &params.sample, seed::split(seed, "direct"))?;
        candidates.extend(direct.into_iter().map(|grasp| Proposal {
            grasp,
            source: ProposalSource::Direct,
        }));
    }
    let keep: Vec<bool> = candidates
        .par_iter()
        .map(|c| {
            reachable(&c.grasp, gripper, up, params.max_approach_deg)
                && !collides_with_cloud(&c.grasp, gripper, &scene.points, params.approach_distance, params.collision_margin)
        })
        .collect();
    Ok(candidates.into_iter().zip(keep).filter(|(_, k)| *k).map(|(c, _)| c).collect())
}
