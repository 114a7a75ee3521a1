use serde::{Deserialize, Serialize};

use super::{Aabb, Pose6D, Pose9D, Vec3};
use crate::{Error, Result};

/// A set of surface points with optional unit normals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points, normals: None }
    }

    pub fn with_normals(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        Ok(Self {
            points,
            normals: Some(normals),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn normal(&self, i: usize) -> Option<&Vec3> {
        self.normals.as_ref().map(|n| &n[i])
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.points)
    }

    pub fn centroid(&self) -> Vec3 {
        let mut c = Vec3::zeros();
        for p in &self.points {
            c += p;
        }
        c / self.points.len().max(1) as f64
    }

    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
        }
    }

    pub fn transformed(&self, pose: &Pose6D) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| n.iter().map(|v| pose.transform_vector(v)).collect()),
        }
    }

    /// Normals must be unit length within 1e-6 when present.
    pub fn check_normals(&self) -> bool {
        self.normals
            .as_ref()
            .map(|n| n.iter().all(|v| (v.norm() - 1.0).abs() <= 1e-6))
            .unwrap_or(true)
    }
}

/// `p' = R·diag(s)·p + t`; normals go through `R·diag(s)⁻¹` and are
/// renormalised, which keeps them perpendicular to the surface under
/// anisotropic scaling.
pub fn transform_cloud(cloud: &PointCloud, pose: &Pose9D) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| pose.transform_point(p)).collect(),
        normals: cloud
            .normals
            .as_ref()
            .map(|n| n.iter().map(|v| pose.transform_normal(v)).collect()),
    }
}

/// Exact inverse of [`transform_cloud`].
pub fn inverse_transform_cloud(cloud: &PointCloud, pose: &Pose9D) -> PointCloud {
    PointCloud {
        points: cloud
            .points
            .iter()
            .map(|p| pose.inverse_transform_point(p))
            .collect(),
        normals: cloud
            .normals
            .as_ref()
            .map(|n| n.iter().map(|v| pose.inverse_transform_normal(v)).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rotation_about;
    use proptest::prelude::*;

    #[test]
    fn identity_pose_leaves_cloud_unchanged() {
        let c = PointCloud::with_normals(vec![Vec3::new(1.0, 2.0, 3.0)], vec![Vec3::x()]).unwrap();
        assert_eq!(transform_cloud(&c, &Pose9D::identity()), c);
    }

    #[test]
    fn anisotropic_scale_is_forced() {
        let c = PointCloud::new(vec![Vec3::new(1.0, 1.0, 1.0)]);
        let p = Pose9D::new(crate::geom::Mat3::identity(), Vec3::zeros(), Vec3::new(2.0, 1.0, 1.0));
        assert_eq!(transform_cloud(&c, &p).points[0], Vec3::new(2.0, 1.0, 1.0));
    }

    #[test]
    fn normals_stay_perpendicular_under_shear_free_stretch() {
        // plane x + y = 1 with normal (1,1,0)/√2; stretch x by 3
        let n = Vec3::new(1.0, 1.0, 0.0).normalize();
        let c = PointCloud::with_normals(vec![Vec3::new(1.0, 0.0, 0.0)], vec![n]).unwrap();
        let p = Pose9D::new(crate::geom::Mat3::identity(), Vec3::zeros(), Vec3::new(3.0, 1.0, 1.0));
        let out = transform_cloud(&c, &p);
        // tangent (−1,1,0) maps to (−3,1,0)
        let tangent = Vec3::new(-3.0, 1.0, 0.0);
        assert!(out.normals.unwrap()[0].dot(&tangent).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn round_trip_with_inverse(
            pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 1..40),
            axis in (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0),
            angle in -3.1f64..3.1,
            scale in (0.3f64..3.0, 0.3f64..3.0, 0.3f64..3.0),
            t in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0),
        ) {
            let cloud = PointCloud::new(pts.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect());
            let pose = Pose9D::new(
                rotation_about(&Vec3::new(axis.0, axis.1, axis.2), angle),
                Vec3::new(t.0, t.1, t.2),
                Vec3::new(scale.0, scale.1, scale.2),
            );
            let back = inverse_transform_cloud(&transform_cloud(&cloud, &pose), &pose);
            for (a, b) in back.points.iter().zip(&cloud.points) {
                prop_assert!((a - b).abs().max() <= 1e-9);
            }
        }
    }
}
