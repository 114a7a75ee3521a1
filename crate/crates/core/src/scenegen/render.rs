use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DepthImage, Scene};
use crate::geom::distance::winding_number;
use crate::geom::raycast::raycast_mesh;
use crate::geom::{PointCloud, Pose9D, TriMesh, Vec3};
use crate::nunocs::NunocsFrame;
use crate::{seed, Error, Result};

/// Instance id of bin and background pixels and points.
pub const NO_INSTANCE: i32 = -1;

/// Labels of a rendered scene. Per-point arrays align with the scene cloud;
/// per-instance arrays align with `Scene::instances`. Everything is in the
/// camera frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Row-major, one per pixel.
    pub pixel_ids: Vec<i32>,
    pub point_ids: Vec<i32>,
    /// `(u, v)` of the pixel each point was rendered from.
    pub point_pixels: Vec<[u32; 2]>,
    /// `point + offset = centre` of the point's instance; zero for the bin.
    pub offsets: Vec<Vec3>,
    /// NUNOCS coordinates in the instance's own frame; zero for the bin.
    pub nunocs: Vec<Vec3>,
    /// Surface centroid of each placed instance.
    pub centers: Vec<Vec3>,
    /// NUNOCS → camera for each instance.
    pub poses: Vec<Pose9D>,
}

impl GroundTruth {
    /// Indices of points that belong to some instance.
    pub fn object_points(&self) -> Vec<usize> {
        (0..self.point_ids.len()).filter(|&i| self.point_ids[i] != NO_INSTANCE).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub depth: DepthImage,
    /// Back-projected returns with normals facing the camera, in pixel order.
    pub cloud: PointCloud,
    pub gt: GroundTruth,
}

/// Nearest hit over all meshes; the first mesh wins exact ties.
fn cast(meshes: &[TriMesh], dir: &Vec3) -> Option<(f64, usize, usize)> {
    let origin = Vec3::zeros();
    let mut best: Option<(f64, usize, usize)> = None;
    for (m, mesh) in meshes.iter().enumerate() {
        let limit = best.map_or(f64::INFINITY, |b| b.0);
        if let Some(h) = raycast_mesh(mesh, &origin, dir, 0.0, limit) {
            if best.is_none_or(|b| h.t < b.0) {
                best = Some((h.t, m, h.face));
            }
        }
    }
    best
}

/// Ray casts every pixel against the bin and all instances (camera frame)
/// and labels each return. Depth noise and dropout are drawn from the scene
/// seed in pixel order.
pub fn render_depth(scene: &Scene, models: &BTreeMap<String, TriMesh>) -> Result<Rendered> {
    let k = scene.camera.intrinsics;
    let to_cam = scene.camera.pose.inverse();
    let world = scene.instance_meshes(models)?;
    let mut meshes = Vec::with_capacity(world.len() + 1);
    let offset = usize::from(scene.bin.is_some());
    if let Some(bin) = &scene.bin {
        meshes.push(bin.mesh().transformed(&to_cam));
    }
    meshes.extend(world.iter().map(|m| m.transformed(&to_cam)));
    for (i, m) in meshes.iter().enumerate() {
        if m.bounds().contains(&Vec3::zeros()) && winding_number(m, &Vec3::zeros()) > 0.5 {
            return Err(Error::Render(format!("camera is inside mesh {i}")));
        }
    }

    let hits: Vec<Option<(f64, usize, usize)>> = (0..k.pixels())
        .into_par_iter()
        .map(|px| cast(&meshes, &k.ray(px % k.width, px / k.width)))
        .collect();

    let mut depth = DepthImage::zeros(k);
    let mut rng = seed::rng(seed::split(scene.seed, "depth-noise"));
    let noise = (scene.depth_sigma > 0.0).then(|| Normal::new(0.0, scene.depth_sigma).expect("finite sigma"));
    let mut frames = Vec::with_capacity(scene.instances.len());
    let mut poses = Vec::with_capacity(scene.instances.len());
    let mut centers = Vec::with_capacity(scene.instances.len());
    for (inst, mesh) in scene.instances.iter().zip(&meshes[offset..]) {
        let frame = NunocsFrame::from_bounds(&models[&inst.model_id].bounds())?;
        let r = to_cam.rotation * inst.pose.rotation;
        let t = r * inst.scale.component_mul(&frame.min) + to_cam.transform_point(&inst.pose.translation);
        poses.push(Pose9D::new(r, t, inst.scale.component_mul(&frame.extents)));
        frames.push(frame);
        centers.push(mesh.surface_centroid());
    }

    let mut gt = GroundTruth {
        pixel_ids: vec![NO_INSTANCE; k.pixels()],
        point_ids: Vec::new(),
        point_pixels: Vec::new(),
        offsets: Vec::new(),
        nunocs: Vec::new(),
        centers,
        poses,
    };
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (px, hit) in hits.iter().enumerate() {
        let Some((t, m, face)) = *hit else { continue };
        let (u, v) = (px % k.width, px / k.width);
        let mut z = t;
        // both draws are made for every hit so noise does not depend on dropout
        let dropped = rng.random::<f64>() < scene.dropout;
        if let Some(n) = &noise {
            z += n.sample(&mut rng);
        }
        if dropped || z <= 0.0 {
            continue;
        }
        depth.data[px] = z;
        let p = k.backproject(u, v, z);
        let mut n = meshes[m].face_normal(face);
        if n.dot(&p) > 0.0 {
            n = -n;
        }
        let id = if m < offset { NO_INSTANCE } else { (m - offset) as i32 };
        gt.pixel_ids[px] = id;
        gt.point_ids.push(id);
        gt.point_pixels.push([u as u32, v as u32]);
        if id == NO_INSTANCE {
            gt.offsets.push(Vec3::zeros());
            gt.nunocs.push(Vec3::zeros());
        } else {
            let i = id as usize;
            gt.offsets.push(gt.centers[i] - p);
            gt.nunocs.push(gt.poses[i].inverse_transform_point(&p).map(|c| c.clamp(0.0, 1.0)));
        }
        points.push(p);
        normals.push(n);
    }
    let cloud = PointCloud::with_normals(points, normals)?;
    Ok(Rendered { depth, cloud, gt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::raycast::ray_triangle;
    use crate::geom::{shapes, Mat3, Pose6D};
    use crate::scenegen::{generate_scene, Camera, Intrinsics, SceneInstance, SceneParams};
    use crate::SCHEMA_VERSION;

    fn looking_down_z(instances: Vec<SceneInstance>) -> Scene {
        Scene {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            bin: None,
            instances,
            camera: Camera {
                intrinsics: Intrinsics::default(),
                pose: Pose6D::identity(),
            },
            depth_sigma: 0.0,
            dropout: 0.0,
        }
    }

    fn cube_models() -> BTreeMap<String, TriMesh> {
        BTreeMap::from([("cube".to_string(), shapes::cuboid(Vec3::repeat(1.0)))])
    }

    #[test]
    fn unit_cube_on_axis() {
        let scene = looking_down_z(vec![SceneInstance {
            model_id: "cube".into(),
            pose: Pose6D::from_translation(Vec3::new(0.0, 0.0, 1.0)),
            scale: Vec3::repeat(1.0),
        }]);
        let r = render_depth(&scene, &cube_models()).unwrap();
        assert!((r.depth.get(160, 120) - 0.5).abs() < 1e-12);
        assert_eq!(r.gt.pixel_ids[120 * 320 + 160], 0);
        // every returned point lies on the front face, facing the camera
        for (p, n) in r.cloud.points.iter().zip(r.cloud.normals.as_ref().unwrap()) {
            assert!((p.z - 0.5).abs() < 1e-12);
            assert!((n - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        }
        for (i, p) in r.cloud.points.iter().enumerate() {
            assert!((p + r.gt.offsets[i] - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
            let c = r.gt.nunocs[i];
            assert!(c.z.abs() < 1e-12);
            assert!((r.gt.poses[0].transform_point(&c) - p).norm() < 1e-12);
        }
    }

    #[test]
    fn empty_scene_and_camera_inside() {
        let r = render_depth(&looking_down_z(vec![]), &cube_models()).unwrap();
        assert!(r.depth.data.iter().all(|&d| d == 0.0));
        assert!(r.cloud.is_empty());
        let inside = looking_down_z(vec![SceneInstance {
            model_id: "cube".into(),
            pose: Pose6D::identity(),
            scale: Vec3::repeat(1.0),
        }]);
        assert!(matches!(render_depth(&inside, &cube_models()), Err(Error::Render(_))));
    }

    #[test]
    fn generated_scene_matches_brute_force() {
        let models = BTreeMap::from([
            ("screw".to_string(), shapes::screw(&shapes::ScrewDims::default(), 16)),
            ("box".to_string(), shapes::cuboid(Vec3::new(0.03, 0.02, 0.05))),
        ]);
        let scene = generate_scene(&models, &SceneParams::default(), 3).unwrap();
        let r = render_depth(&scene, &models).unwrap();
        let to_cam = scene.camera.pose.inverse();
        let mut tris: Vec<(i32, [Vec3; 3])> = Vec::new();
        let bin = scene.bin.unwrap().mesh().transformed(&to_cam);
        tris.extend((0..bin.num_faces()).map(|f| (NO_INSTANCE, bin.triangle(f))));
        for (i, m) in scene.instance_meshes(&models).unwrap().iter().enumerate() {
            let m = m.transformed(&to_cam);
            tris.extend((0..m.num_faces()).map(|f| (i as i32, m.triangle(f))));
        }
        let k = scene.camera.intrinsics;
        let mut rng = seed::rng(99);
        let on_objects: Vec<usize> = (0..k.pixels()).filter(|&px| r.gt.pixel_ids[px] != NO_INSTANCE).collect();
        assert!(on_objects.len() > 500);
        // half uniform over the image, half on instances
        for s in 0..50 {
            let px = if s % 2 == 0 {
                rng.random_range(0..k.pixels())
            } else {
                on_objects[rng.random_range(0..on_objects.len())]
            };
            let (u, v) = (px % k.width, px / k.width);
            let dir = k.ray(u, v);
            let mut best = (f64::INFINITY, NO_INSTANCE);
            for (id, t) in &tris {
                if let Some(h) = ray_triangle(&Vec3::zeros(), &dir, t, 0.0) {
                    if h < best.0 {
                        best = (h, *id);
                    }
                }
            }
            let d = r.depth.get(u, v);
            if best.0.is_finite() {
                assert!((d - best.0).abs() < 1e-9, "pixel ({u}, {v}): {d} vs {}", best.0);
            } else {
                assert_eq!(d, 0.0);
            }
            assert_eq!(r.gt.pixel_ids[px], if d > 0.0 { best.1 } else { NO_INSTANCE });
        }
        // every point projects back to its pixel with matching depth
        for (i, p) in r.cloud.points.iter().enumerate() {
            let [u, v] = r.gt.point_pixels[i];
            assert_eq!(k.project(p), Some((u as usize, v as usize)));
            assert!((r.depth.get(u as usize, v as usize) - p.z).abs() < 1e-9);
            if r.gt.point_ids[i] >= 0 {
                let j = r.gt.point_ids[i] as usize;
                assert!((p + r.gt.offsets[i] - r.gt.centers[j]).norm() < 1e-12);
                assert!(r.gt.nunocs[i].iter().all(|c| (0.0..=1.0).contains(c)));
                assert!((r.gt.poses[j].transform_point(&r.gt.nunocs[i]) - p).norm() < 1e-9);
            }
        }
        assert_eq!(render_depth(&scene, &models).unwrap(), r);
    }

    #[test]
    fn noise_and_dropout_are_seeded() {
        let mut scene = looking_down_z(vec![SceneInstance {
            model_id: "cube".into(),
            pose: Pose6D::new(Mat3::identity(), Vec3::new(0.0, 0.0, 2.0)),
            scale: Vec3::repeat(1.0),
        }]);
        scene.depth_sigma = 0.001;
        scene.dropout = 0.2;
        let a = render_depth(&scene, &cube_models()).unwrap();
        let b = render_depth(&scene, &cube_models()).unwrap();
        assert_eq!(a, b);
        let hits = a.depth.data.iter().filter(|&&d| d > 0.0).count();
        let clean = render_depth(&looking_down_z(scene.instances.clone()), &cube_models()).unwrap();
        let total = clean.cloud.len();
        assert!((hits as f64) < 0.85 * total as f64 && (hits as f64) > 0.75 * total as f64);
    }
}
