use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::distance::unsigned_distance;
use crate::geom::io::{load_mesh, write_atomic, write_obj};
use crate::geom::{mesh_collision, poisson_disk_sample, shapes, Pose6D, TriMesh, Vec3};
use crate::grasping::{Grasp, GripperModel};
use crate::nunocs::store::check_schema;
use crate::{Error, Result, SCHEMA_VERSION};

/// A receptacle plus the declared insertion path of the object, both in the
/// receptacle frame (z up).
#[derive(Debug, Clone)]
pub struct PlacementTask {
    pub receptacle: TriMesh,
    /// Object poses along the insertion; the last one is the rest pose.
    pub path: Vec<Pose6D>,
    /// Contact distance and centre-of-mass slack for the rest check, metres.
    pub tolerance: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    schema_version: u32,
    receptacle_mesh: String,
    #[serde(default = "one")]
    scale_to_m: f64,
    path: Vec<Pose6D>,
    tolerance: f64,
}

fn one() -> f64 {
    1.0
}

impl PlacementTask {
    pub fn new(receptacle: TriMesh, path: Vec<Pose6D>, tolerance: f64) -> Result<Self> {
        if path.is_empty() {
            return Err(Error::InvalidInput("placement path is empty".into()));
        }
        if !(tolerance >= 0.0) {
            return Err(Error::InvalidInput("placement tolerance must be non-negative".into()));
        }
        Ok(Self {
            receptacle,
            path,
            tolerance,
        })
    }

    pub fn rest(&self) -> Pose6D {
        *self.path.last().expect("non-empty path")
    }

    /// The task for an object scaled per axis by `s`: receptacle vertices
    /// and path translations are scaled alike. Exact for paths whose
    /// rotations map the coordinate axes onto themselves (pure insertions).
    pub fn scaled(&self, s: &Vec3) -> Self {
        Self {
            receptacle: self.receptacle.scaled(s),
            path: self
                .path
                .iter()
                .map(|p| Pose6D::new(p.rotation, p.translation.component_mul(s)))
                .collect(),
            tolerance: self.tolerance,
        }
    }

    /// Reads a task JSON; the receptacle mesh path is relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let file: TaskFile = serde_json::from_slice(&std::fs::read(path)?)?;
        check_schema(&path.display().to_string(), file.schema_version)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let receptacle = load_mesh(&dir.join(&file.receptacle_mesh), file.scale_to_m)?;
        Self::new(receptacle, file.path, file.tolerance)
    }

    /// Writes `<stem>.json` next to `<stem>_receptacle.obj`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("task");
        let mesh_name = format!("{stem}_receptacle.obj");
        write_obj(&dir.join(&mesh_name), &self.receptacle)?;
        let file = TaskFile {
            schema_version: SCHEMA_VERSION,
            receptacle_mesh: mesh_name,
            scale_to_m: 1.0,
            path: self.path.clone(),
            tolerance: self.tolerance,
        };
        let mut json = serde_json::to_vec_pretty(&file)?;
        json.push(b'\n');
        write_atomic(path, &json)
    }
}

/// Screw-into-collar task: a ring narrower than the screw head whose hole
/// admits the shaft. The screw (shaft along +z from the origin, head on top)
/// descends axis-first until the head rests `gap` above the ring.
pub fn screw_collar_task(dims: &shapes::ScrewDims, segments: usize) -> Result<PlacementTask> {
    let r_in = dims.shaft_radius + 0.001;
    let r_out = (r_in + dims.head_radius) / 2.0 + 0.0005;
    let thickness = 0.005;
    let receptacle = shapes::annulus(r_in, r_out, thickness, segments);
    let gap = 1e-4;
    let rest_z = -dims.shaft_length + gap;
    let start_z = gap + 0.005;
    let step = 0.0005;
    let n = ((start_z - rest_z) / step).ceil() as usize;
    let path = (0..=n)
        .map(|k| {
            let z = start_z + (rest_z - start_z) * (k as f64 / n as f64);
            Pose6D::from_translation(Vec3::new(0.0, 0.0, z))
        })
        .collect();
    PlacementTask::new(receptacle, path, 0.0005)
}

/// Kinematic placement test: the gripper, rigidly attached to the object at
/// `grasp` with jaws at `closing_width`, never touches the receptacle along
/// the path, and at rest the object is collision-free and statically
/// supported (centre of mass over the convex hull of the contacts).
pub fn placement_check(object: &TriMesh, grasp: &Grasp, closing_width: f64, gripper: &GripperModel, task: &PlacementTask) -> bool {
    path_is_clear(grasp, closing_width, gripper, task) && rest_is_ok(object, task)
}

/// Grasp-dependent half of [`placement_check`].
pub fn path_is_clear(grasp: &Grasp, closing_width: f64, gripper: &GripperModel, task: &PlacementTask) -> bool {
    let identity = Pose6D::identity();
    let parts = gripper.open_parts(closing_width.clamp(0.0, gripper.params.max_opening));
    task.path.iter().all(|obj_pose| {
        let grip = obj_pose.compose(&grasp.pose);
        !parts.iter().any(|p| mesh_collision(p, &grip, &task.receptacle, &identity))
    })
}

/// Grasp-independent half of [`placement_check`].
pub fn rest_is_ok(object: &TriMesh, task: &PlacementTask) -> bool {
    let rest = task.rest();
    !mesh_collision(object, &rest, &task.receptacle, &Pose6D::identity())
        && rest_is_stable(object, &rest, &task.receptacle, task.tolerance)
}

/// Contacts are object surface samples (spacing about `tol`) and receptacle
/// vertices lying within `tol` of the other body; the projected centre of
/// mass must lie within `tol` of their convex hull in the xy plane.
pub fn rest_is_stable(object: &TriMesh, rest: &Pose6D, receptacle: &TriMesh, tol: f64) -> bool {
    let placed = object.transformed(rest);
    let near = |m: &TriMesh, p: &Vec3| m.bounds().distance(p) <= tol && unsigned_distance(m, p) <= tol;
    let radius = tol.max(placed.diameter() / 100.0).max(1e-6);
    let Ok(samples) = poisson_disk_sample(&placed, radius, 0) else {
        return false;
    };
    let contacts: Vec<[f64; 2]> = samples
        .points
        .iter()
        .chain(placed.vertices())
        .filter(|v| near(receptacle, v))
        .chain(receptacle.vertices().iter().filter(|v| near(&placed, v)))
        .map(|v| [v.x, v.y])
        .collect();
    if contacts.is_empty() {
        return false;
    }
    let com = placed.center_of_mass();
    let hull = convex_hull(contacts);
    distance_to_polygon([com.x, com.y], &hull) <= tol
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; counter-clockwise, no collinear points.
pub(crate) fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Zero inside (or on) the polygon, else distance to its boundary. Handles
/// degenerate hulls of one or two points.
pub(crate) fn distance_to_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> f64 {
    let seg = |a: [f64; 2], b: [f64; 2]| {
        let d = [b[0] - a[0], b[1] - a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        let t = if len2 > 0.0 {
            (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = [a[0] + t * d[0], a[1] + t * d[1]];
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    };
    match poly.len() {
        0 => f64::INFINITY,
        1 => seg(poly[0], poly[0]),
        2 => seg(poly[0], poly[1]),
        n => {
            let inside = (0..n).all(|i| cross(poly[i], poly[(i + 1) % n], p) >= 0.0);
            if inside {
                0.0
            } else {
                (0..n).map(|i| seg(poly[i], poly[(i + 1) % n])).fold(f64::INFINITY, f64::min)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{rotation_from_rotvec, triangles_intersect};
    use crate::grasping::GripperParams;
    use std::f64::consts::PI;

    fn screw() -> (TriMesh, shapes::ScrewDims) {
        let d = shapes::ScrewDims::default();
        (shapes::screw(&d, 24), d)
    }

    /// Top-down grasp (approach −z) closing along x at height `z`.
    fn grasp_at(z: f64, width: f64) -> Grasp {
        Grasp::new(Pose6D::new(rotation_from_rotvec(&(Vec3::y() * PI)), Vec3::new(0.0, 0.0, z)), width)
    }

    /// Side grasp: approach along +x, closing along y, at height `z`.
    fn side_grasp_at(z: f64, width: f64) -> Grasp {
        let r = crate::geom::Mat3::from_columns(&[Vec3::y(), Vec3::z(), Vec3::x()]);
        Grasp::new(Pose6D::new(r, Vec3::new(0.0, 0.0, z)), width)
    }

    fn brute_collides(a: &TriMesh, pa: &Pose6D, b: &TriMesh) -> bool {
        let a = a.transformed(pa);
        (0..a.num_faces()).any(|i| (0..b.num_faces()).any(|j| triangles_intersect(&a.triangle(i), &b.triangle(j))))
    }

    #[test]
    fn head_grasp_places_thread_grasp_does_not() {
        let (m, d) = screw();
        let task = screw_collar_task(&d, 24).unwrap();
        let g = GripperModel::new(GripperParams::default()).unwrap();
        let head = side_grasp_at(d.shaft_length + d.head_height / 2.0, 0.032);
        let thread = side_grasp_at(0.012, 0.022);
        assert!(placement_check(&m, &head, 2.0 * d.head_radius, &g, &task));
        assert!(!placement_check(&m, &thread, 2.0 * d.shaft_radius, &g, &task));
        // the verdicts agree with exhaustive triangle tests along the path
        for (grasp, w, expect_hit) in [(head, 2.0 * d.head_radius, false), (thread, 2.0 * d.shaft_radius, true)] {
            let parts = g.open_parts(w);
            let hit = task.path.iter().any(|p| {
                let pose = p.compose(&grasp.pose);
                parts.iter().any(|part| brute_collides(part, &pose, &task.receptacle))
            });
            assert_eq!(hit, expect_hit);
        }
    }

    #[test]
    fn top_down_head_grasp_places() {
        let (m, d) = screw();
        let task = screw_collar_task(&d, 24).unwrap();
        let g = GripperModel::new(GripperParams::default()).unwrap();
        let head = grasp_at(d.shaft_length + d.head_height / 2.0, 0.032);
        assert!(placement_check(&m, &head, 2.0 * d.head_radius, &g, &task));
    }

    #[test]
    fn far_receptacle_is_decided_by_rest_check() {
        let (m, d) = screw();
        let mut task = screw_collar_task(&d, 24).unwrap();
        task.receptacle = shapes::translated(&task.receptacle, Vec3::new(10.0, 0.0, 0.0));
        let g = GripperModel::new(GripperParams::default()).unwrap();
        let thread = side_grasp_at(0.012, 0.022);
        // no collision anywhere, but nothing supports the screw at rest
        assert!(!placement_check(&m, &thread, 0.006, &g, &task));
    }

    #[test]
    fn box_on_plate_stability() {
        let b = shapes::cuboid(Vec3::new(0.02, 0.02, 0.02));
        let plate = shapes::cuboid_between(Vec3::new(-0.05, -0.05, -0.01), Vec3::new(0.05, 0.05, 0.0));
        let rest = Pose6D::from_translation(Vec3::new(0.0, 0.0, 0.01 + 1e-4));
        assert!(rest_is_stable(&b, &rest, &plate, 5e-4));
        // centre of mass still over the plate edge
        let edge = Pose6D::from_translation(Vec3::new(0.045, 0.0, 0.01 + 1e-4));
        assert!(rest_is_stable(&b, &edge, &plate, 5e-4));
        // centre of mass beyond the edge
        let over = Pose6D::from_translation(Vec3::new(0.052, 0.0, 0.01 + 1e-4));
        assert!(!rest_is_stable(&b, &over, &plate, 5e-4));
    }

    #[test]
    fn hull_and_distance() {
        let hull = convex_hull(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.5, 0.0]]);
        assert_eq!(hull.len(), 4);
        assert_eq!(distance_to_polygon([0.5, 0.5], &hull), 0.0);
        assert!((distance_to_polygon([2.0, 0.5], &hull) - 1.0).abs() < 1e-15);
        assert!((distance_to_polygon([0.0, 2.0], &[[0.0, 0.0], [0.0, 1.0]]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn task_file_round_trip() {
        let (_, d) = screw();
        let task = screw_collar_task(&d, 16).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("screw_task.json");
        task.save(&path).unwrap();
        let back = PlacementTask::load(&path).unwrap();
        assert_eq!(back.path.len(), task.path.len());
        assert_eq!(back.receptacle.num_faces(), task.receptacle.num_faces());
        assert!((back.rest().translation - task.rest().translation).norm() < 1e-15);
    }
}
