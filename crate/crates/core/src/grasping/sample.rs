use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Grasp, GripperModel};
use crate::geom::{KdTree, Mat3, Pose6D, PointCloud, Vec3};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleParams {
    /// Maximum angle between one normal and the negated other, degrees.
    pub antipodal_tol_deg: f64,
    /// Added to the contact separation to get the pre-close opening.
    pub clearance: f64,
    /// Maximum distance of the partner point from the line through the
    /// first point along its inward normal.
    pub line_tol: f64,
    /// Attempts allowed per requested grasp.
    pub attempts_per_grasp: usize,
}

impl Default for SampleParams {
    fn default() -> Self {
        Self {
            antipodal_tol_deg: 15.0,
            clearance: 0.016,
            line_tol: 0.0015,
            attempts_per_grasp: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleReport {
    pub requested: usize,
    pub produced: usize,
    pub attempts: usize,
}

/// Antipodal candidate grasps on a cloud with normals.
///
/// Each attempt picks a surface point, looks for the nearest partner along
/// its inward normal whose normal roughly opposes it, and places the gripper
/// origin at the midpoint with a random approach direction orthogonal to the
/// contact line. Fewer than `n` grasps are returned (with a warning) when the
/// attempt budget runs out.
pub fn sample_grasps(
    cloud: &PointCloud,
    gripper: &GripperModel,
    n: usize,
    params: &SampleParams,
    seed: u64,
) -> Result<(Vec<Grasp>, SampleReport)> {
    let normals = cloud
        .normals
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("sample_grasps needs a cloud with normals".into()))?;
    if cloud.is_empty() {
        return Err(Error::InvalidInput("sample_grasps on an empty cloud".into()));
    }
    let tree = KdTree::new(&cloud.points);
    let cos_tol = params.antipodal_tol_deg.to_radians().cos();
    let max_sep = gripper.params.max_opening - params.clearance;
    let basis_t = gripper.basis().transpose();
    let mut rng = seed::rng(seed);
    let mut grasps = Vec::with_capacity(n);
    let budget = n.saturating_mul(params.attempts_per_grasp);
    let mut attempts = 0;
    while grasps.len() < n && attempts < budget {
        attempts += 1;
        let i = rng.random_range(0..cloud.len());
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let p1 = cloud.points[i];
        let n1 = normals[i];
        let inward = -n1;
        let mut best: Option<(f64, usize)> = None;
        for j in tree.within(&p1, max_sep.max(0.0)) {
            let d = cloud.points[j] - p1;
            let along = d.dot(&inward);
            if along <= 1e-6 || (d - inward * along).norm() > params.line_tol {
                continue;
            }
            if normals[j].dot(&inward) < cos_tol {
                continue;
            }
            if best.is_none_or(|(a, _)| along < a) {
                best = Some((along, j));
            }
        }
        let Some((_, j)) = best else { continue };
        let p2 = cloud.points[j];
        let sep = (p1 - p2).norm();
        let width = sep + params.clearance;
        if width > gripper.params.max_opening {
            continue;
        }
        let x = (p1 - p2) / sep;
        let (u, v) = orthonormal_pair(&x);
        let a = u * theta.cos() + v * theta.sin();
        let frame = Mat3::from_columns(&[x, a.cross(&x), a]);
        let pose = Pose6D::new(frame * basis_t, (p1 + p2) / 2.0);
        grasps.push(Grasp::new(pose, width));
    }
    let report = SampleReport {
        requested: n,
        produced: grasps.len(),
        attempts,
    };
    if report.produced < n {
        log::warn!("sample_grasps: produced {} of {} grasps in {} attempts", report.produced, n, attempts);
    }
    Ok((grasps, report))
}

/// Two unit vectors completing `x` to a right-handed orthonormal basis.
pub(crate) fn orthonormal_pair(x: &Vec3) -> (Vec3, Vec3) {
    let helper = if x.x.abs() < 0.6 { Vec3::x() } else { Vec3::y() };
    let u = x.cross(&helper).normalize();
    let v = x.cross(&u);
    (u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{poisson_disk_sample, shapes};
    use crate::grasping::GripperParams;

    #[test]
    fn sphere_grasps_span_the_diameter() {
        let sphere = shapes::icosphere(1.0, 4);
        let cloud = poisson_disk_sample(&sphere, 0.05, 3).unwrap();
        let g = GripperModel::new(GripperParams {
            max_opening: 2.2,
            ..Default::default()
        })
        .unwrap();
        let params = SampleParams {
            line_tol: 0.1,
            clearance: 0.05,
            ..Default::default()
        };
        let (grasps, report) = sample_grasps(&cloud, &g, 40, &params, 9).unwrap();
        assert_eq!(report.produced, 40);
        for gr in &grasps {
            assert!((gr.width - 2.05).abs() < 0.02, "width {}", gr.width);
            assert!(gr.pose.is_valid());
            assert!(gr.pose.translation.norm() < params.line_tol, "{}", gr.pose.translation.norm());
            // approach is orthogonal to the closing axis
            assert!(gr.approach_axis(&g).dot(&gr.closing_axis(&g)).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let m = shapes::cuboid(Vec3::new(0.02, 0.03, 0.04));
        let cloud = poisson_disk_sample(&m, 0.002, 1).unwrap();
        let g = GripperModel::new(GripperParams::default()).unwrap();
        let a = sample_grasps(&cloud, &g, 30, &SampleParams::default(), 5).unwrap();
        let b = sample_grasps(&cloud, &g, 30, &SampleParams::default(), 5).unwrap();
        assert_eq!(a, b);
        let c = sample_grasps(&cloud, &g, 30, &SampleParams::default(), 6).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn too_large_object_gives_partial_result() {
        let m = shapes::cuboid(Vec3::new(0.2, 0.2, 0.2));
        let cloud = poisson_disk_sample(&m, 0.01, 1).unwrap();
        let g = GripperModel::new(GripperParams::default()).unwrap();
        let (grasps, report) = sample_grasps(&cloud, &g, 10, &SampleParams::default(), 1).unwrap();
        assert!(grasps.is_empty());
        assert_eq!(report.attempts, 200);
    }

    #[test]
    fn needs_normals() {
        let g = GripperModel::new(GripperParams::default()).unwrap();
        let cloud = PointCloud::new(vec![Vec3::zeros()]);
        assert!(sample_grasps(&cloud, &g, 1, &SampleParams::default(), 0).is_err());
    }
}
