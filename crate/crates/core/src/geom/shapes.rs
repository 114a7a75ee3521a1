//! Closed primitive meshes used for fixtures, synthetic categories, gripper
//! parts and the bin.

use std::collections::HashMap;

use super::{Pose6D, TriMesh, Vec3};

/// Axis-aligned box centred at the origin.
pub fn cuboid(extents: Vec3) -> TriMesh {
    let h = extents * 0.5;
    cuboid_between(-h, h)
}

pub fn cuboid_between(min: Vec3, max: Vec3) -> TriMesh {
    let v = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
    let verts = vec![
        v(min.x, min.y, min.z),
        v(max.x, min.y, min.z),
        v(max.x, max.y, min.z),
        v(min.x, max.y, min.z),
        v(min.x, min.y, max.z),
        v(max.x, min.y, max.z),
        v(max.x, max.y, max.z),
        v(min.x, max.y, max.z),
    ];
    let faces = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    TriMesh::new(verts, faces).expect("box is valid")
}

/// Geodesic sphere: icosahedron with `subdivisions` rounds of midpoint
/// splitting (20·4ⁿ faces).
pub fn icosphere(radius: f64, subdivisions: u32) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let ab = mid(f[0], f[1], &mut verts);
            let bc = mid(f[1], f[2], &mut verts);
            let ca = mid(f[2], f[0], &mut verts);
            next.push([f[0], ab, ca]);
            next.push([f[1], bc, ab]);
            next.push([f[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    let verts = verts.into_iter().map(|v| v * radius).collect();
    TriMesh::new(verts, faces).expect("icosphere is valid")
}

/// Solid of revolution about +z. `profile` is a list of `(radius, z)`
/// points; points with zero radius become pole vertices. With `closed` the
/// last point connects back to the first (annuli); otherwise the profile
/// should start and end on the axis.
pub fn revolve(profile: &[(f64, f64)], segments: usize, closed: bool) -> TriMesh {
    assert!(segments >= 3 && profile.len() >= 2);
    let mut verts = Vec::new();
    // ring index table: either one pole vertex or `segments` ring vertices
    let mut rings: Vec<Vec<usize>> = Vec::new();
    for &(r, z) in profile {
        if r.abs() < 1e-15 {
            verts.push(Vec3::new(0.0, 0.0, z));
            rings.push(vec![verts.len() - 1]);
        } else {
            let start = verts.len();
            for k in 0..segments {
                let a = std::f64::consts::TAU * k as f64 / segments as f64;
                verts.push(Vec3::new(r * a.cos(), r * a.sin(), z));
            }
            rings.push((start..start + segments).collect());
        }
    }
    let mut faces = Vec::new();
    let n = profile.len();
    let pairs = if closed { n } else { n - 1 };
    for i in 0..pairs {
        let a = &rings[i];
        let b = &rings[(i + 1) % n];
        for k in 0..segments {
            let k1 = (k + 1) % segments;
            match (a.len(), b.len()) {
                (1, 1) => {}
                (1, _) => faces.push([a[0], b[k1], b[k]]),
                (_, 1) => faces.push([a[k], a[k1], b[0]]),
                _ => {
                    faces.push([a[k], a[k1], b[k1]]);
                    faces.push([a[k], b[k1], b[k]]);
                }
            }
        }
    }
    let mut mesh = TriMesh::new(verts.clone(), faces.clone()).expect("revolved profile is valid");
    if mesh.volume() < 0.0 {
        let flipped = faces.iter().map(|f| [f[0], f[2], f[1]]).collect();
        mesh = TriMesh::new(verts, flipped).expect("revolved profile is valid");
    }
    mesh
}

/// Closed cylinder of the given radius spanning `z ∈ [0, height]`.
pub fn cylinder(radius: f64, height: f64, segments: usize) -> TriMesh {
    revolve(
        &[(0.0, 0.0), (radius, 0.0), (radius, height), (0.0, height)],
        segments,
        false,
    )
}

/// Flat-headed screw along +z: shaft `z ∈ [0, shaft_len]`, head above it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScrewDims {
    pub shaft_radius: f64,
    pub shaft_length: f64,
    pub head_radius: f64,
    pub head_height: f64,
}

impl Default for ScrewDims {
    fn default() -> Self {
        Self {
            shaft_radius: 0.003,
            shaft_length: 0.030,
            head_radius: 0.008,
            head_height: 0.005,
        }
    }
}

impl ScrewDims {
    pub fn total_length(&self) -> f64 {
        self.shaft_length + self.head_height
    }

    /// Fraction of the length (from the shaft tip) where the head starts.
    pub fn head_fraction(&self) -> f64 {
        self.shaft_length / self.total_length()
    }
}

pub fn screw(d: &ScrewDims, segments: usize) -> TriMesh {
    let l = d.shaft_length;
    let h = l + d.head_height;
    revolve(
        &[
            (0.0, 0.0),
            (d.shaft_radius, 0.0),
            (d.shaft_radius, l),
            (d.head_radius, l),
            (d.head_radius, h),
            (0.0, h),
        ],
        segments,
        false,
    )
}

/// Flat ring `r ∈ [inner, outer]`, `z ∈ [-thickness, 0]` (top face at z = 0).
pub fn annulus(inner: f64, outer: f64, thickness: f64, segments: usize) -> TriMesh {
    revolve(
        &[
            (inner, -thickness),
            (outer, -thickness),
            (outer, 0.0),
            (inner, 0.0),
        ],
        segments,
        true,
    )
}

/// Open-top bin: floor top face at z = 0, interior `size_x × size_y`.
pub fn open_bin(size_x: f64, size_y: f64, wall_height: f64, thickness: f64) -> TriMesh {
    let hx = size_x / 2.0;
    let hy = size_y / 2.0;
    let t = thickness;
    let floor = cuboid_between(
        Vec3::new(-hx - t, -hy - t, -t),
        Vec3::new(hx + t, hy + t, 0.0),
    );
    let wx0 = cuboid_between(Vec3::new(-hx - t, -hy - t, 0.0), Vec3::new(-hx, hy + t, wall_height));
    let wx1 = cuboid_between(Vec3::new(hx, -hy - t, 0.0), Vec3::new(hx + t, hy + t, wall_height));
    let wy0 = cuboid_between(Vec3::new(-hx, -hy - t, 0.0), Vec3::new(hx, -hy, wall_height));
    let wy1 = cuboid_between(Vec3::new(-hx, hy, 0.0), Vec3::new(hx, hy + t, wall_height));
    TriMesh::merged(&[&floor, &wx0, &wx1, &wy0, &wy1])
}

pub fn translated(m: &TriMesh, t: Vec3) -> TriMesh {
    m.transformed(&Pose6D::from_translation(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_are_closed() {
        assert!(icosphere(1.0, 2).is_watertight());
        assert!(cylinder(1.0, 2.0, 16).is_watertight());
        assert!(screw(&ScrewDims::default(), 24).is_watertight());
        assert!(annulus(0.004, 0.01, 0.005, 24).is_watertight());
    }

    #[test]
    fn revolve_volumes_are_positive_and_close_to_analytic() {
        let c = cylinder(1.0, 2.0, 256);
        let exact = std::f64::consts::PI * 2.0;
        assert!((c.volume() - exact).abs() / exact < 1e-3);
        let a = annulus(1.0, 2.0, 1.0, 256);
        let exact = std::f64::consts::PI * 3.0;
        assert!(a.volume() > 0.0 && (a.volume() - exact).abs() / exact < 1e-3);
    }

    #[test]
    fn icosphere_face_count() {
        assert_eq!(icosphere(1.0, 0).num_faces(), 20);
        assert_eq!(icosphere(1.0, 3).num_faces(), 1280);
    }
}
