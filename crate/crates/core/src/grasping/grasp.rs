use serde::{Deserialize, Serialize};

use super::GripperModel;
use crate::geom::distance::signed_distance;
use crate::geom::raycast::raycast_mesh;
use crate::geom::{mesh_collision, Pose6D, Pose9D, PointCloud, TriMesh, Vec3};
use crate::geom::orthonormalize;

/// A parallel-jaw grasp: gripper pose in the object (or camera) frame, jaw
/// opening before closing, and an empirical success probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grasp {
    pub pose: Pose6D,
    pub width: f64,
    #[serde(default)]
    pub quality: f64,
}

impl Grasp {
    pub fn new(pose: Pose6D, width: f64) -> Self {
        Self {
            pose,
            width,
            quality: 0.0,
        }
    }

    pub fn transformed(&self, t: &Pose6D) -> Self {
        Self {
            pose: t.compose(&self.pose),
            ..*self
        }
    }

    /// Closing axis in the frame the grasp is expressed in.
    pub fn closing_axis(&self, gripper: &GripperModel) -> Vec3 {
        self.pose.rotation * gripper.closing()
    }

    pub fn approach_axis(&self, gripper: &GripperModel) -> Vec3 {
        self.pose.rotation * gripper.approach()
    }

    /// Pushes the grasp through a 9-D map. Orientation follows the rotation
    /// part only; the width follows the stretch of the closing axis.
    pub fn mapped(&self, map: &Pose9D, gripper: &GripperModel) -> Self {
        let axis = self.closing_axis(gripper);
        Self {
            pose: Pose6D::new(
                orthonormalize(&(map.rotation * self.pose.rotation)),
                map.transform_point(&self.pose.translation),
            ),
            width: self.width * axis.component_mul(&map.scale).norm(),
            quality: self.quality,
        }
    }

    /// Exact inverse of [`Grasp::mapped`].
    pub fn unmapped(&self, map: &Pose9D, gripper: &GripperModel) -> Self {
        let rotation = map.rotation.transpose() * self.pose.rotation;
        let axis = rotation * gripper.closing();
        Self {
            pose: Pose6D::new(rotation, map.inverse_transform_point(&self.pose.translation)),
            width: self.width / axis.component_mul(&map.scale).norm(),
            quality: self.quality,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspOutcome {
    pub success: bool,
    /// Cloud indices within `contact_eps` of either closed finger, ascending;
    /// empty unless `success`.
    pub contact_points: Vec<usize>,
    /// Jaw separation after closing; `None` if a finger closed on nothing.
    pub closing_width: Option<f64>,
}

impl GraspOutcome {
    fn failed() -> Self {
        Self {
            success: false,
            contact_points: Vec::new(),
            closing_width: None,
        }
    }
}

/// Result of closing both fingers independently onto a cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Closing {
    /// Travel of the `+closing` and `−closing` finger; `None` if the finger
    /// reached the centre plane without touching anything.
    pub travel: [Option<f64>; 2],
    pub contacts: [Vec<usize>; 2],
}

impl Closing {
    pub fn closed(&self) -> bool {
        self.travel.iter().all(Option::is_some)
    }

    pub fn all_contacts(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.contacts.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// Closes each finger along the closing axis until it first touches a cloud
/// point, then collects the points within `contact_eps` of it.
pub fn close_fingers(points: &[Vec3], grasp: &Grasp, gripper: &GripperModel) -> Closing {
    let inv = grasp.pose.inverse();
    let local: Vec<Vec3> = points.iter().map(|p| inv.transform_point(p)).collect();
    let half = grasp.width / 2.0;
    let c = gripper.closing();
    let eps = gripper.params.contact_eps;
    let plus = close_one(&local, &gripper.finger, c * half, -c, half, eps);
    let minus = close_one(&local, &gripper.finger_mirror, -c * half, c, half, eps);
    Closing {
        travel: [plus.0, minus.0],
        contacts: [plus.1, minus.1],
    }
}

fn close_one(
    local: &[Vec3],
    finger: &TriMesh,
    offset: Vec3,
    motion: Vec3,
    max_travel: f64,
    eps: f64,
) -> (Option<f64>, Vec<usize>) {
    // In the finger's frame the points move against `motion`.
    let dir = -motion;
    let mut travel = f64::INFINITY;
    for q in local {
        let r = q - offset;
        if let Some(hit) = raycast_mesh(finger, &r, &dir, -1e-12, max_travel) {
            travel = travel.min(hit.t.max(0.0));
        }
    }
    if !travel.is_finite() {
        return (None, Vec::new());
    }
    let placed = offset + motion * travel;
    let bounds = finger.bounds();
    let contacts = local
        .iter()
        .enumerate()
        .filter(|(_, q)| {
            let r = *q - placed;
            bounds.distance(&r) <= eps && signed_distance(finger, &r) <= eps
        })
        .map(|(i, _)| i)
        .collect();
    (Some(travel), contacts)
}

/// Two-contact force closure with Coulomb friction: the segment joining the
/// contacts lies inside both friction cones (inward normals, half-angle
/// atan μ). Normals are outward.
pub fn antipodal(c1: &Vec3, n1: &Vec3, c2: &Vec3, n2: &Vec3, mu: f64) -> bool {
    let d = c2 - c1;
    let len = d.norm();
    if len < 1e-9 {
        return false;
    }
    let cos_lim = 1.0 / (1.0 + mu * mu).sqrt() * len;
    -d.dot(n1) >= cos_lim && d.dot(n2) >= cos_lim
}

/// Deterministic grasp verdict: no collision of the open gripper with the
/// object, both fingers close onto the cloud, and some pair of contacts on
/// opposite fingers is in force closure.
pub fn grasp_oracle(object: &TriMesh, cloud: &PointCloud, grasp: &Grasp, gripper: &GripperModel) -> GraspOutcome {
    grasp_oracle_mu(object, cloud, grasp, gripper, gripper.params.friction_mu)
}

/// [`grasp_oracle`] with an explicit friction coefficient.
pub fn grasp_oracle_mu(object: &TriMesh, cloud: &PointCloud, grasp: &Grasp, gripper: &GripperModel, mu: f64) -> GraspOutcome {
    if !(grasp.width > 0.0) || grasp.width > gripper.params.max_opening + 1e-12 {
        return GraspOutcome::failed();
    }
    let Some(normals) = cloud.normals.as_ref() else {
        log::warn!("grasp_oracle: cloud has no normals; reporting failure");
        return GraspOutcome::failed();
    };
    let identity = Pose6D::identity();
    for part in gripper.open_parts(grasp.width) {
        if mesh_collision(&part, &grasp.pose, object, &identity) {
            return GraspOutcome::failed();
        }
    }
    let closing = close_fingers(&cloud.points, grasp, gripper);
    let [Some(t1), Some(t2)] = closing.travel else {
        return GraspOutcome::failed();
    };
    let p = &cloud.points;
    let success = closing.contacts[0].iter().any(|&i| {
        closing.contacts[1]
            .iter()
            .any(|&j| antipodal(&p[i], &normals[i], &p[j], &normals[j], mu))
    });
    GraspOutcome {
        success,
        contact_points: if success { closing.all_contacts() } else { Vec::new() },
        closing_width: Some(grasp.width - t1 - t2),
    }
}
