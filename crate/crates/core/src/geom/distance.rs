//! Point-to-surface distance, inside/outside classification and Chamfer
//! distance.

use super::{KdTree, PointCloud, TriMesh, Vec3};
use crate::{Error, Result};

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Unsigned distance from `p` to the mesh surface. Triangles whose bounding
/// box is farther than the running best are skipped.
pub fn unsigned_distance(mesh: &TriMesh, p: &Vec3) -> f64 {
    let mut best = f64::INFINITY;
    for (i, bb) in mesh.tri_bounds().iter().enumerate() {
        if bb.distance(p) >= best {
            continue;
        }
        let [a, b, c] = mesh.triangle(i);
        let d = (closest_point_on_triangle(p, &a, &b, &c) - p).norm();
        if d < best {
            best = d;
        }
    }
    best
}

/// Solid angle of triangle `abc` seen from `p`, divided by 4π.
fn triangle_winding(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let a = a - p;
    let b = b - p;
    let c = c - p;
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let num = a.dot(&b.cross(&c));
    let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
    num.atan2(den) / (2.0 * std::f64::consts::PI)
}

/// Generalised winding number over raw vertex/face arrays: ≈1 inside a closed
/// outward-oriented surface, ≈0 outside; degrades gracefully for open meshes.
pub(crate) fn winding_number_raw(vertices: &[Vec3], faces: &[[usize; 3]], p: &Vec3) -> f64 {
    faces
        .iter()
        .map(|f| triangle_winding(p, &vertices[f[0]], &vertices[f[1]], &vertices[f[2]]))
        .sum()
}

pub fn winding_number(mesh: &TriMesh, p: &Vec3) -> f64 {
    if !mesh.bounds().contains(p) {
        // outside the box the solid angle sums to 0 for closed meshes; open
        // meshes still need the full sum
        if mesh.is_watertight() {
            return 0.0;
        }
    }
    winding_number_raw(mesh.vertices(), mesh.faces(), p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedDistance {
    pub distance: f64,
    /// False when the mesh is not watertight; the sign then comes from a
    /// winding-number estimate.
    pub sign_reliable: bool,
}

/// Negative inside, positive outside; points on the surface give 0.
pub fn signed_distance(mesh: &TriMesh, p: &Vec3) -> f64 {
    signed_distance_checked(mesh, p).distance
}

pub fn signed_distance_checked(mesh: &TriMesh, p: &Vec3) -> SignedDistance {
    let d = unsigned_distance(mesh, p);
    let reliable = mesh.is_watertight();
    if !reliable {
        mesh.sign_warning.get_or_init(|| {
            log::warn!(
                "mesh with {} faces is not watertight; signed distance uses a winding-number sign estimate",
                mesh.num_faces()
            );
        });
    }
    let inside = d > 0.0 && winding_number(mesh, p) > 0.5;
    SignedDistance {
        distance: if inside { -d } else { d },
        sign_reliable: reliable,
    }
}

/// Mean nearest-neighbour distance from each point of `a` to `b`.
pub fn one_sided_chamfer(a: &[Vec3], b: &KdTree) -> f64 {
    let sum: f64 = a
        .iter()
        .map(|p| b.nearest(p).expect("non-empty tree").1)
        .sum();
    sum / a.len() as f64
}

/// Symmetric Chamfer distance: mean NN distance a→b plus mean NN distance b→a.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("chamfer distance of an empty cloud".into()));
    }
    let ta = KdTree::new(&a.points);
    let tb = KdTree::new(&b.points);
    Ok(one_sided_chamfer(&a.points, &tb) + one_sided_chamfer(&b.points, &ta))
}
