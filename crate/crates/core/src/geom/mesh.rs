use std::collections::HashMap;
use std::sync::OnceLock;

use super::{Aabb, Pose6D, Pose9D, Vec3};
use crate::{Error, Result};

/// Indexed triangle mesh. Immutable after construction; per-triangle bounds
/// and the watertightness flag are computed once.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    tri_bounds: Vec<Aabb>,
    bounds: Aabb,
    watertight: bool,
    pub(crate) sign_warning: OnceLock<()>,
}

impl PartialEq for TriMesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.faces == other.faces
    }
}

impl TriMesh {
    /// Validates indices and drops degenerate (zero-area) faces.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::EmptyMesh(": no vertices".into()));
        }
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::InvalidInput(format!(
                "face {f:?} indexes past {} vertices",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !super::is_finite(v)) {
            return Err(Error::InvalidInput("non-finite vertex".into()));
        }
        let diag = Aabb::from_points(&vertices).diagonal();
        let min_area = 1e-14 * diag * diag;
        let faces: Vec<[usize; 3]> = faces
            .into_iter()
            .filter(|f| {
                f[0] != f[1]
                    && f[1] != f[2]
                    && f[0] != f[2]
                    && tri_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]) > min_area
            })
            .collect();
        if faces.is_empty() {
            return Err(Error::EmptyMesh(": no non-degenerate faces".into()));
        }
        Ok(Self::build(vertices, faces))
    }

    fn build(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Self {
        let tri_bounds: Vec<Aabb> = faces
            .iter()
            .map(|f| Aabb::from_points([&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]]))
            .collect();
        let mut bounds = Aabb::empty();
        for b in &tri_bounds {
            bounds.grow(&b.min);
            bounds.grow(&b.max);
        }
        let watertight = is_closed_manifold(&faces);
        Self {
            vertices,
            faces,
            tri_bounds,
            bounds,
            watertight,
            sign_warning: OnceLock::new(),
        }
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let f = self.faces[i];
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    pub fn tri_bounds(&self) -> &[Aabb] {
        &self.tri_bounds
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    /// Diagonal of the bounding box; an upper bound on the true diameter.
    pub fn diameter(&self) -> f64 {
        self.bounds.diagonal()
    }

    /// Every edge shared by exactly two consistently oriented faces.
    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    pub fn face_normal(&self, i: usize) -> Vec3 {
        let [a, b, c] = self.triangle(i);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn face_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        tri_area(&a, &b, &c)
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|i| self.face_area(i)).sum()
    }

    /// Area-weighted centroid of the surface.
    pub fn surface_centroid(&self) -> Vec3 {
        let mut acc = Vec3::zeros();
        let mut total = 0.0;
        for i in 0..self.faces.len() {
            let [a, b, c] = self.triangle(i);
            let w = tri_area(&a, &b, &c);
            acc += (a + b + c) * (w / 3.0);
            total += w;
        }
        acc / total
    }

    /// Signed volume (positive for outward-oriented closed meshes).
    pub fn volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Centre of mass of the enclosed solid at uniform density. Falls back to
    /// the surface centroid when the enclosed volume vanishes.
    pub fn center_of_mass(&self) -> Vec3 {
        let mut acc = Vec3::zeros();
        let mut vol = 0.0;
        for i in 0..self.faces.len() {
            let [a, b, c] = self.triangle(i);
            let v = a.dot(&b.cross(&c)) / 6.0;
            acc += (a + b + c) * (v / 4.0);
            vol += v;
        }
        if vol.abs() < 1e-18 {
            self.surface_centroid()
        } else {
            acc / vol
        }
    }

    pub fn transformed(&self, pose: &Pose6D) -> TriMesh {
        let v = self.vertices.iter().map(|p| pose.transform_point(p)).collect();
        Self::build(v, self.faces.clone())
    }

    pub fn transformed9(&self, pose: &Pose9D) -> TriMesh {
        let v = self.vertices.iter().map(|p| pose.transform_point(p)).collect();
        Self::build(v, self.faces.clone())
    }

    pub fn scaled(&self, s: &Vec3) -> TriMesh {
        let v = self.vertices.iter().map(|p| p.component_mul(s)).collect();
        Self::build(v, self.faces.clone())
    }

    /// Reflection through the plane through the origin with unit normal `n`.
    /// Face winding is flipped so normals stay outward.
    pub fn mirrored(&self, n: &Vec3) -> TriMesh {
        let n = n.normalize();
        let v = self
            .vertices
            .iter()
            .map(|p| p - n * (2.0 * p.dot(&n)))
            .collect();
        let f = self.faces.iter().map(|f| [f[0], f[2], f[1]]).collect();
        Self::build(v, f)
    }

    /// Disjoint union.
    pub fn merged(parts: &[&TriMesh]) -> TriMesh {
        let mut v = Vec::new();
        let mut f = Vec::new();
        for m in parts {
            let base = v.len();
            v.extend_from_slice(&m.vertices);
            f.extend(m.faces.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        }
        Self::build(v, f)
    }
}

pub(crate) fn tri_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn is_closed_manifold(faces: &[[usize; 3]]) -> bool {
    let mut directed: HashMap<(usize, usize), u32> = HashMap::with_capacity(faces.len() * 3);
    for f in faces {
        for k in 0..3 {
            *directed.entry((f[k], f[(k + 1) % 3])).or_insert(0) += 1;
        }
    }
    directed
        .iter()
        .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes;

    #[test]
    fn cube_is_watertight_with_unit_volume() {
        let m = shapes::cuboid(Vec3::new(1.0, 1.0, 1.0));
        assert!(m.is_watertight());
        assert!((m.volume() - 1.0).abs() < 1e-12);
        assert!((m.area() - 6.0).abs() < 1e-12);
        assert!(m.center_of_mass().norm() < 1e-12);
    }

    #[test]
    fn degenerate_faces_are_dropped() {
        let v = vec![
            Vec3::zeros(),
            Vec3::x(),
            Vec3::y(),
            Vec3::new(2.0, 0.0, 0.0),
        ];
        let m = TriMesh::new(v, vec![[0, 1, 2], [0, 1, 3], [1, 1, 2]]).unwrap();
        assert_eq!(m.num_faces(), 1);
        assert!(!m.is_watertight());
    }

    #[test]
    fn rejects_bad_indices_and_empty() {
        assert!(TriMesh::new(vec![Vec3::zeros()], vec![[0, 1, 2]]).is_err());
        assert!(TriMesh::new(vec![], vec![]).is_err());
        assert!(TriMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0], vec![[0, 1, 2]]).is_err());
    }

    #[test]
    fn mirrored_mesh_keeps_outward_orientation() {
        let m = shapes::cuboid(Vec3::new(1.0, 2.0, 3.0)).transformed(&Pose6D::from_translation(Vec3::x()));
        let r = m.mirrored(&Vec3::x());
        assert!(r.is_watertight());
        assert!((r.volume() - 6.0).abs() < 1e-12);
        assert!((r.center_of_mass() + Vec3::x()).norm() < 1e-12);
    }
}
