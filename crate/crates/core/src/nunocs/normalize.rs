use serde::{Deserialize, Serialize};

use crate::geom::{Aabb, PointCloud, Pose9D, Vec3};
use crate::{Error, Result};

/// Per-axis min-max frame: `c = (p − min) / extents`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NunocsFrame {
    pub min: Vec3,
    pub extents: Vec3,
}

impl NunocsFrame {
    /// Fails when any axis has zero extent (planar or linear input).
    pub fn from_bounds(b: &Aabb) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::Degenerate("empty point set".into()));
        }
        let extents = b.extents();
        let scale = b.diagonal().max(f64::MIN_POSITIVE);
        if let Some(d) = (0..3).find(|&d| !(extents[d] > 1e-12 * scale)) {
            return Err(Error::Degenerate(format!(
                "zero extent along axis {d}; cloud is planar or linear"
            )));
        }
        Ok(Self { min: b.min, extents })
    }

    pub fn normalize(&self, p: &Vec3) -> Vec3 {
        (p - self.min).component_div(&self.extents)
    }

    pub fn denormalize(&self, c: &Vec3) -> Vec3 {
        self.min + self.extents.component_mul(c)
    }

    /// ℂ → source frame as a pose.
    pub fn to_source(&self) -> Pose9D {
        Pose9D::new(crate::geom::Mat3::identity(), self.min, self.extents)
    }

    /// Source frame → ℂ as a pose.
    pub fn from_source(&self) -> Pose9D {
        let inv = self.extents.map(|e| 1.0 / e);
        Pose9D::new(crate::geom::Mat3::identity(), -self.min.component_mul(&inv), inv)
    }
}

/// A cloud expressed in the normalised object space, remembering the frame
/// it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NunocsCloud {
    pub points: Vec<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<Vec<Vec3>>,
    pub source_extents: Vec3,
    pub source_min: Vec3,
}

impl NunocsCloud {
    pub fn frame(&self) -> NunocsFrame {
        NunocsFrame {
            min: self.source_min,
            extents: self.source_extents,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn as_cloud(&self) -> PointCloud {
        PointCloud {
            points: self.points.clone(),
            normals: self.normals.clone(),
        }
    }

    /// Back to the source frame.
    pub fn denormalize(&self) -> PointCloud {
        crate::geom::transform_cloud(&self.as_cloud(), &self.frame().to_source())
    }
}

/// Normalise each axis of `cloud` independently into `[0, 1]`.
pub fn to_nunocs(cloud: &PointCloud) -> Result<NunocsCloud> {
    let frame = NunocsFrame::from_bounds(&cloud.bounds())?;
    Ok(to_nunocs_in(cloud, &frame))
}

/// Express `cloud` in an externally supplied frame (e.g. the full model's
/// bounds for a sampled subset).
pub fn to_nunocs_in(cloud: &PointCloud, frame: &NunocsFrame) -> NunocsCloud {
    let c = crate::geom::transform_cloud(cloud, &frame.from_source());
    NunocsCloud {
        points: c.points,
        normals: c.normals,
        source_extents: frame.extents,
        source_min: frame.min,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn box_corners_map_to_unit_cube() {
        let pts: Vec<Vec3> = (0..8)
            .map(|i| Vec3::new(
                if i & 1 == 0 { -1.0 } else { 1.0 },
                if i & 2 == 0 { -1.0 } else { 1.0 },
                if i & 4 == 0 { -1.0 } else { 1.0 },
            ))
            .collect();
        let n = to_nunocs(&PointCloud::new(pts.clone())).unwrap();
        for (c, p) in n.points.iter().zip(&pts) {
            assert_eq!(*c, (p + Vec3::repeat(1.0)) / 2.0);
        }
    }

    #[test]
    fn per_axis_formula() {
        let c = PointCloud::new(vec![
            Vec3::zeros(),
            Vec3::new(4.0, 2.0, 1.0),
            Vec3::new(4.0, 1.0, 0.5),
        ]);
        let n = to_nunocs(&c).unwrap();
        assert_eq!(n.points[2], Vec3::new(1.0, 0.5, 0.5));
        assert_eq!(n.source_extents, Vec3::new(4.0, 2.0, 1.0));
    }

    #[test]
    fn coplanar_cloud_is_rejected() {
        let c = PointCloud::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()]);
        assert!(matches!(to_nunocs(&c), Err(Error::Degenerate(_))));
    }

    proptest! {
        #[test]
        fn round_trip_and_affine_invariance(
            pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0), 4..60),
            s in (0.1f64..10.0, 0.1f64..10.0, 0.1f64..10.0),
            t in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0),
        ) {
            let cloud = PointCloud::new(pts.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect());
            let Ok(n) = to_nunocs(&cloud) else { return Ok(()) };
            for (a, b) in n.denormalize().points.iter().zip(&cloud.points) {
                prop_assert!((a - b).abs().max() <= 1e-9);
            }
            for c in &n.points {
                prop_assert!(c.iter().all(|v| (-1e-9..=1.0 + 1e-9).contains(v)));
            }
            let s = Vec3::new(s.0, s.1, s.2);
            let t = Vec3::new(t.0, t.1, t.2);
            let moved = PointCloud::new(cloud.points.iter().map(|p| p.component_mul(&s) + t).collect());
            let m = to_nunocs(&moved).unwrap();
            for (a, b) in m.points.iter().zip(&n.points) {
                prop_assert!((a - b).abs().max() <= 1e-9);
            }
        }
    }
}
