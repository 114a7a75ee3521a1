//! Ray-triangle and ray-mesh intersection.

use super::{TriMesh, Vec3};

/// Möller–Trumbore. Returns the ray parameter of a hit with `t > t_min`;
/// both faces count.
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3], t_min: f64) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-18 {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = origin - tri[0];
    let u = tvec.dot(&pvec) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qvec) * inv;
    (t > t_min).then_some(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub face: usize,
}

/// Nearest hit along the ray within `(t_min, t_max]`; ties go to the lower
/// face index.
pub fn raycast_mesh(mesh: &TriMesh, origin: &Vec3, dir: &Vec3, t_min: f64, t_max: f64) -> Option<RayHit> {
    mesh.bounds().ray_hit(origin, dir, t_max)?;
    let mut best: Option<RayHit> = None;
    for (i, bb) in mesh.tri_bounds().iter().enumerate() {
        let limit = best.map_or(t_max, |b| b.t);
        match bb.ray_hit(origin, dir, limit) {
            Some(_) => {}
            None => continue,
        }
        if let Some(t) = ray_triangle(origin, dir, &mesh.triangle(i), t_min) {
            if t <= limit && best.is_none_or(|b| t < b.t) {
                best = Some(RayHit { t, face: i });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes;
    use rand::Rng;

    #[test]
    fn hits_front_face_of_cube() {
        let cube = shapes::cuboid(Vec3::repeat(1.0));
        let hit = raycast_mesh(&cube, &Vec3::new(0.0, 0.0, -3.0), &Vec3::z(), 0.0, 10.0).unwrap();
        assert!((hit.t - 2.5).abs() < 1e-12);
        assert!(raycast_mesh(&cube, &Vec3::new(2.0, 0.0, -3.0), &Vec3::z(), 0.0, 10.0).is_none());
    }

    #[test]
    fn matches_all_triangle_scan() {
        let mesh = shapes::icosphere(0.3, 2);
        let mut rng = crate::seed::rng(21);
        for _ in 0..500 {
            let o = Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, -1.0);
            let d = Vec3::new(rng.random::<f64>() * 0.4 - 0.2, rng.random::<f64>() * 0.4 - 0.2, 1.0).normalize();
            let brute = (0..mesh.num_faces())
                .filter_map(|i| ray_triangle(&o, &d, &mesh.triangle(i), 0.0))
                .fold(f64::INFINITY, f64::min);
            match raycast_mesh(&mesh, &o, &d, 0.0, f64::INFINITY) {
                Some(h) => assert!((h.t - brute).abs() < 1e-9),
                None => assert!(brute.is_infinite()),
            }
        }
    }
}
