//! Triangle-mesh collision. Contact at zero gap counts as a collision
//! (closed-set convention).

use super::distance::winding_number_raw;
use super::{Aabb, Pose6D, TriMesh, Vec3};

/// Projections closer than this along a unit axis are treated as touching.
const TOUCH_TOL: f64 = 1e-12;

fn project(t: &[Vec3; 3], axis: &Vec3) -> (f64, f64) {
    let a = t[0].dot(axis);
    let b = t[1].dot(axis);
    let c = t[2].dot(axis);
    (a.min(b).min(c), a.max(b).max(c))
}

fn separated_along(t1: &[Vec3; 3], t2: &[Vec3; 3], axis: Vec3) -> bool {
    let n = axis.norm();
    if n < 1e-18 {
        return false;
    }
    let axis = axis / n;
    let (min1, max1) = project(t1, &axis);
    let (min2, max2) = project(t2, &axis);
    max1 < min2 - TOUCH_TOL || max2 < min1 - TOUCH_TOL
}

/// Separating-axis test over the 17 candidate axes (two face normals, nine
/// edge-edge cross products, six in-plane edge normals for the coplanar
/// case). Symmetric in its arguments.
pub fn triangles_intersect(t1: &[Vec3; 3], t2: &[Vec3; 3]) -> bool {
    let e1 = [t1[1] - t1[0], t1[2] - t1[1], t1[0] - t1[2]];
    let e2 = [t2[1] - t2[0], t2[2] - t2[1], t2[0] - t2[2]];
    let n1 = e1[0].cross(&e1[1]);
    let n2 = e2[0].cross(&e2[1]);
    if separated_along(t1, t2, n1) || separated_along(t1, t2, n2) {
        return false;
    }
    for a in &e1 {
        for b in &e2 {
            if separated_along(t1, t2, a.cross(b)) {
                return false;
            }
        }
    }
    for a in &e1 {
        if separated_along(t1, t2, n1.cross(a)) {
            return false;
        }
    }
    for b in &e2 {
        if separated_along(t1, t2, n2.cross(b)) {
            return false;
        }
    }
    true
}

struct Placed<'a> {
    vertices: Vec<Vec3>,
    faces: &'a [[usize; 3]],
    bounds: Aabb,
}

impl<'a> Placed<'a> {
    fn new(mesh: &'a TriMesh, pose: Option<&Pose6D>) -> Self {
        let vertices: Vec<Vec3> = match pose {
            Some(p) => mesh.vertices().iter().map(|v| p.transform_point(v)).collect(),
            None => mesh.vertices().to_vec(),
        };
        let bounds = Aabb::from_points(&vertices);
        Self {
            vertices,
            faces: mesh.faces(),
            bounds,
        }
    }

    fn triangle(&self, i: usize) -> [Vec3; 3] {
        let f = self.faces[i];
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    /// Triangles whose bounds touch `region`, with their bounds.
    fn candidates(&self, region: &Aabb) -> Vec<(usize, Aabb)> {
        (0..self.faces.len())
            .filter_map(|i| {
                let t = self.triangle(i);
                let bb = Aabb::from_points(&t);
                bb.overlaps(region).then_some((i, bb))
            })
            .collect()
    }

    fn contains(&self, p: &Vec3) -> bool {
        self.bounds.contains(p) && winding_number_raw(&self.vertices, self.faces, p) > 0.5
    }
}

fn placed_intersect(a: &Placed, b: &Placed) -> bool {
    let overlap = a.bounds.inflated(TOUCH_TOL).intersection(&b.bounds.inflated(TOUCH_TOL));
    if overlap.is_empty() {
        return false;
    }
    let ca = a.candidates(&overlap);
    let cb = b.candidates(&overlap);
    for (i, ba) in &ca {
        let ta = a.triangle(*i);
        let ba = ba.inflated(TOUCH_TOL);
        for (j, bb) in &cb {
            if ba.overlaps(bb) && triangles_intersect(&ta, &b.triangle(*j)) {
                return true;
            }
        }
    }
    // no surface crossing: either disjoint or one strictly inside the other
    a.contains(&b.vertices[b.faces[0][0]]) || b.contains(&a.vertices[a.faces[0][0]])
}

/// True iff the two placed meshes touch, intersect, or one contains the
/// other. Symmetric in its arguments.
pub fn mesh_collision(a: &TriMesh, pose_a: &Pose6D, b: &TriMesh, pose_b: &Pose6D) -> bool {
    placed_intersect(&Placed::new(a, Some(pose_a)), &Placed::new(b, Some(pose_b)))
}

/// [`mesh_collision`] for meshes already expressed in a common frame.
pub fn meshes_intersect(a: &TriMesh, b: &TriMesh) -> bool {
    placed_intersect(&Placed::new(a, None), &Placed::new(b, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{rotation_about, shapes};
    use rand::Rng;

    fn cube() -> TriMesh {
        shapes::cuboid(Vec3::repeat(1.0))
    }

    #[test]
    fn separated_coincident_and_touching_cubes() {
        let c = cube();
        let id = Pose6D::identity();
        assert!(!mesh_collision(&c, &id, &c, &Pose6D::from_translation(Vec3::new(3.0, 0.0, 0.0))));
        assert!(mesh_collision(&c, &id, &c, &id));
        assert!(mesh_collision(&c, &id, &c, &Pose6D::from_translation(Vec3::new(1.0, 0.0, 0.0))));
        assert!(!mesh_collision(&c, &id, &c, &Pose6D::from_translation(Vec3::new(1.0 + 1e-6, 0.0, 0.0))));
    }

    #[test]
    fn containment_without_surface_contact() {
        let big = shapes::cuboid(Vec3::repeat(4.0));
        let small = cube();
        let id = Pose6D::identity();
        assert!(mesh_collision(&big, &id, &small, &id));
        assert!(mesh_collision(&small, &id, &big, &id));
    }

    #[test]
    fn symmetric_on_random_placements() {
        let a = shapes::icosphere(0.5, 1);
        let b = shapes::cuboid(Vec3::new(0.3, 1.2, 0.4));
        let mut rng = crate::seed::rng(9);
        for _ in 0..200 {
            let pa = Pose6D::new(
                rotation_about(&Vec3::new(rng.random(), rng.random(), 1.0), rng.random::<f64>() * 6.0),
                Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, 0.0),
            );
            let pb = Pose6D::from_translation(Vec3::new(rng.random::<f64>() * 1.6 - 0.8, 0.0, 0.0));
            assert_eq!(mesh_collision(&a, &pa, &b, &pb), mesh_collision(&b, &pb, &a, &pa));
        }
    }

    #[test]
    fn coplanar_triangles() {
        let t1 = [Vec3::zeros(), Vec3::x(), Vec3::y()];
        let t2 = [Vec3::new(0.2, 0.2, 0.0), Vec3::new(2.0, 0.2, 0.0), Vec3::new(0.2, 2.0, 0.0)];
        let t3 = [Vec3::new(0.6, 0.6, 0.0), Vec3::new(2.0, 0.6, 0.0), Vec3::new(0.6, 2.0, 0.0)];
        assert!(triangles_intersect(&t1, &t2));
        assert!(!triangles_intersect(&t1, &t3));
    }
}
