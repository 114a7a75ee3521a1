//! Blue-noise surface sampling by greedy dart throwing over a dense,
//! area-weighted candidate set.

use std::collections::HashMap;

use rand::Rng;

use super::{PointCloud, TriMesh, Vec3};
use crate::{Error, Result};

/// Candidates drawn per disk of the target radius.
const OVERSAMPLE: f64 = 30.0;
const MAX_CANDIDATES: usize = 4_000_000;

/// Uniform random point on the surface: face chosen by area, then a uniform
/// barycentric sample.
pub fn sample_surface_point<R: Rng>(mesh: &TriMesh, cumulative: &[f64], rng: &mut R) -> (Vec3, usize) {
    let total = *cumulative.last().expect("non-empty mesh");
    let x = rng.random::<f64>() * total;
    let face = cumulative.partition_point(|&c| c <= x).min(cumulative.len() - 1);
    let [a, b, c] = mesh.triangle(face);
    let r1 = rng.random::<f64>().sqrt();
    let r2 = rng.random::<f64>();
    (a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2), face)
}

pub fn cumulative_areas(mesh: &TriMesh) -> Vec<f64> {
    let mut acc = 0.0;
    (0..mesh.num_faces())
        .map(|i| {
            acc += mesh.face_area(i);
            acc
        })
        .collect()
}

type Cell = (i64, i64, i64);

fn cell_of(p: &Vec3, size: f64) -> Cell {
    (
        (p.x / size).floor() as i64,
        (p.y / size).floor() as i64,
        (p.z / size).floor() as i64,
    )
}

/// Surface samples with pairwise distance ≥ `radius` and face normals.
/// Deterministic for a given seed. A radius at least the mesh diameter
/// yields a single point.
pub fn poisson_disk_sample(mesh: &TriMesh, radius: f64, seed: u64) -> Result<PointCloud> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidInput(format!("sampling radius must be positive, got {radius}")));
    }
    let mut rng = crate::seed::rng(seed);
    let cumulative = cumulative_areas(mesh);
    if radius >= mesh.diameter() {
        log::warn!("sampling radius {radius} ≥ mesh diameter {}; returning one point", mesh.diameter());
        let (p, f) = sample_surface_point(mesh, &cumulative, &mut rng);
        return PointCloud::with_normals(vec![p], vec![mesh.face_normal(f)]);
    }
    let area = *cumulative.last().unwrap();
    let n_candidates =
        ((OVERSAMPLE * area / (std::f64::consts::PI * radius * radius)).ceil() as usize).clamp(1, MAX_CANDIDATES);

    let r2 = radius * radius;
    let mut grid: HashMap<Cell, Vec<usize>> = HashMap::new();
    let mut points: Vec<Vec3> = Vec::new();
    let mut normals = Vec::new();
    for _ in 0..n_candidates {
        let (p, f) = sample_surface_point(mesh, &cumulative, &mut rng);
        let c = cell_of(&p, radius);
        let mut free = true;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = grid.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                        if list.iter().any(|&j| (points[j] - p).norm_squared() < r2) {
                            free = false;
                            break 'scan;
                        }
                    }
                }
            }
        }
        if free {
            grid.entry(c).or_default().push(points.len());
            points.push(p);
            normals.push(mesh.face_normal(f));
        }
    }
    PointCloud::with_normals(points, normals)
}
