use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Intrinsics;
use crate::geom::{meshes_intersect, rotation_from_rotvec, shapes, Mat3, Pose6D, TriMesh, Vec3};
use crate::{seed, Error, Result, SCHEMA_VERSION};

/// Open-top bin centred at the world origin, floor top face at z = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BinSpec {
    pub size_x: f64,
    pub size_y: f64,
    pub wall_height: f64,
    pub thickness: f64,
}

impl Default for BinSpec {
    fn default() -> Self {
        Self {
            size_x: 0.25,
            size_y: 0.25,
            wall_height: 0.08,
            thickness: 0.01,
        }
    }
}

impl BinSpec {
    pub fn mesh(&self) -> TriMesh {
        shapes::open_bin(self.size_x, self.size_y, self.wall_height, self.thickness)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneParams {
    pub bin: BinSpec,
    /// Inclusive instance-count range.
    pub count_range: (usize, usize),
    /// Uniform scale factor range applied to all three axes.
    pub scale_range: (f64, f64),
    /// Extra factor applied to one random axis; `(1, 1)` disables it.
    pub stretch_range: (f64, f64),
    pub intrinsics: Intrinsics,
    /// Camera distance from the bin centre, metres.
    pub camera_distance: (f64, f64),
    /// Maximum tilt of the viewing direction from vertical, degrees.
    pub camera_cone_deg: f64,
    /// Additive Gaussian depth noise, metres.
    pub depth_sigma: f64,
    /// Probability that a pixel returns no depth.
    pub dropout: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            bin: BinSpec::default(),
            count_range: (4, 6),
            scale_range: (0.9, 1.1),
            stretch_range: (1.0, 1.0),
            intrinsics: Intrinsics::default(),
            camera_distance: (0.45, 0.55),
            camera_cone_deg: 15.0,
            depth_sigma: 0.0,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneInstance {
    pub model_id: String,
    /// Model frame (after per-axis scaling) to world.
    pub pose: Pose6D,
    pub scale: Vec3,
}

impl SceneInstance {
    pub fn mesh(&self, model: &TriMesh) -> TriMesh {
        model.scaled(&self.scale).transformed(&self.pose)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    /// Camera frame to world.
    pub pose: Pose6D,
}

impl Camera {
    /// World +z expressed in the camera frame.
    pub fn up(&self) -> Vec3 {
        self.pose.rotation.transpose() * Vec3::z()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub schema_version: u32,
    pub seed: u64,
    /// `None` for a free-floating scene (tests and single-object planning).
    pub bin: Option<BinSpec>,
    pub instances: Vec<SceneInstance>,
    pub camera: Camera,
    pub depth_sigma: f64,
    pub dropout: f64,
}

impl Scene {
    pub fn instance_meshes(&self, models: &BTreeMap<String, TriMesh>) -> Result<Vec<TriMesh>> {
        self.instances
            .iter()
            .map(|inst| {
                models
                    .get(&inst.model_id)
                    .map(|m| inst.mesh(m))
                    .ok_or_else(|| Error::UnknownInstance(inst.model_id.clone()))
            })
            .collect()
    }
}

const SCENE_RETRIES: u64 = 10;
const PLACE_ATTEMPTS: usize = 100;
const SETTLE_TRIES: usize = 20;
const DESCENT_STEP: f64 = 0.002;

/// Drops instances into the bin one at a time and settles each
/// geometrically: straight descent to first contact, then up to 20 random
/// small rotations and slides that are kept only if they lower the
/// instance. A scene whose instance cannot be placed in 100 attempts is
/// retried with the next sub-seed, up to 10 times.
pub fn generate_scene(models: &BTreeMap<String, TriMesh>, params: &SceneParams, seed: u64) -> Result<Scene> {
    if models.is_empty() {
        return Err(Error::SceneGeneration("no models".into()));
    }
    let (lo, hi) = params.count_range;
    if lo > hi || hi == 0 {
        return Err(Error::SceneGeneration(format!("bad count range ({lo}, {hi})")));
    }
    let ids: Vec<&String> = models.keys().collect();
    for k in 0..SCENE_RETRIES {
        let sub = seed::split_index(seed::split(seed, "scene"), k);
        match try_scene(models, &ids, params, sub) {
            Some(instances) => {
                let mut rng = seed::rng(seed::split(sub, "camera"));
                let camera = sample_camera(params, &mut rng);
                return Ok(Scene {
                    schema_version: SCHEMA_VERSION,
                    seed,
                    bin: Some(params.bin),
                    instances,
                    camera,
                    depth_sigma: params.depth_sigma,
                    dropout: params.dropout,
                });
            }
            None => log::warn!("scene {seed}: retry {k} could not place every instance"),
        }
    }
    Err(Error::SceneGeneration(format!("seed {seed}: no valid scene after {SCENE_RETRIES} retries")))
}

fn try_scene(models: &BTreeMap<String, TriMesh>, ids: &[&String], params: &SceneParams, seed: u64) -> Option<Vec<SceneInstance>> {
    let mut rng = seed::rng(seed);
    let (lo, hi) = params.count_range;
    let count = rng.random_range(lo..=hi);
    let mut obstacles = vec![params.bin.mesh()];
    let mut instances = Vec::with_capacity(count);
    for _ in 0..count {
        let placed = (0..PLACE_ATTEMPTS).find_map(|_| place_one(models, ids, params, &obstacles, &mut rng))?;
        obstacles.push(placed.0);
        instances.push(placed.1);
    }
    Some(instances)
}

fn place_one(
    models: &BTreeMap<String, TriMesh>,
    ids: &[&String],
    params: &SceneParams,
    obstacles: &[TriMesh],
    rng: &mut ChaCha8Rng,
) -> Option<(TriMesh, SceneInstance)> {
    let id = ids[rng.random_range(0..ids.len())];
    let (s0, s1) = params.scale_range;
    let u = if s1 > s0 { rng.random_range(s0..=s1) } else { s0 };
    let mut scale = Vec3::repeat(u);
    let (t0, t1) = params.stretch_range;
    let stretch = if t1 > t0 { rng.random_range(t0..=t1) } else { t0 };
    let axis = rng.random_range(0..3);
    scale[axis] *= stretch;
    let scaled = models[id].scaled(&scale);
    let rotation = random_rotation(rng);
    let hx = params.bin.size_x / 2.0;
    let hy = params.bin.size_y / 2.0;
    let xy = (rng.random_range(-hx..hx), rng.random_range(-hy..hy));
    let (mut pose, mut height) = settle(&scaled, &rotation, xy, params, obstacles)?;
    let small = Normal::new(0.0, 0.2).expect("finite");
    let slide = Normal::new(0.0, 0.005).expect("finite");
    for _ in 0..SETTLE_TRIES {
        let dr = Vec3::new(small.sample(rng), small.sample(rng), small.sample(rng));
        let r = pose.rotation * rotation_from_rotvec(&dr);
        let p = (pose.translation.x + slide.sample(rng), pose.translation.y + slide.sample(rng));
        if let Some((cand, h)) = settle(&scaled, &r, p, params, obstacles) {
            if h < height {
                pose = cand;
                height = h;
            }
        }
    }
    let mesh = scaled.transformed(&pose);
    Some((
        mesh,
        SceneInstance {
            model_id: id.clone(),
            pose,
            scale,
        },
    ))
}

/// Lowest collision-free height of the rotated mesh above `xy` reached by
/// straight descent, and the resulting surface-centroid height. `None` if
/// the footprint leaves the bin interior or the drop is blocked.
fn settle(scaled: &TriMesh, rotation: &Mat3, xy: (f64, f64), params: &SceneParams, obstacles: &[TriMesh]) -> Option<(Pose6D, f64)> {
    let rotated = scaled.transformed(&Pose6D::new(*rotation, Vec3::zeros()));
    let b = rotated.bounds();
    let hx = params.bin.size_x / 2.0;
    let hy = params.bin.size_y / 2.0;
    let margin = 1e-4;
    if xy.0 + b.min.x < -hx + margin || xy.0 + b.max.x > hx - margin || xy.1 + b.min.y < -hy + margin || xy.1 + b.max.y > hy - margin {
        return None;
    }
    let top = obstacles.iter().skip(1).map(|o| o.bounds().max.z).fold(0.0, f64::max);
    let at = |z: f64| Pose6D::new(*rotation, Vec3::new(xy.0, xy.1, z));
    let collides = |z: f64| {
        let m = scaled.transformed(&at(z));
        obstacles.iter().any(|o| meshes_intersect(&m, o))
    };
    let mut free = top + 0.01 - b.min.z;
    if collides(free) {
        return None;
    }
    let floor_z = -b.min.z;
    let mut hit = loop {
        let next = free - DESCENT_STEP;
        if next < floor_z - DESCENT_STEP || collides(next) {
            break next;
        }
        free = next;
    };
    for _ in 0..24 {
        let mid = 0.5 * (free + hit);
        if collides(mid) {
            hit = mid;
        } else {
            free = mid;
        }
    }
    let pose = at(free);
    let height = scaled.transformed(&pose).surface_centroid().z;
    Some((pose, height))
}

/// Uniform random rotation from a normalised Gaussian quaternion.
pub fn random_rotation<R: Rng>(rng: &mut R) -> Mat3 {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return Pose6D::from_quaternion([q[0] / n, q[1] / n, q[2] / n, q[3] / n], Vec3::zeros()).rotation;
        }
    }
}

fn sample_camera<R: Rng>(params: &SceneParams, rng: &mut R) -> Camera {
    let tilt = rng.random_range(0.0..=params.camera_cone_deg.max(0.0)).to_radians();
    let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
    let (d0, d1) = params.camera_distance;
    let dist = if d1 > d0 { rng.random_range(d0..=d1) } else { d0 };
    let dir = Vec3::new(tilt.sin() * azimuth.cos(), tilt.sin() * azimuth.sin(), tilt.cos());
    let position = dir * dist;
    let z = -dir;
    // image x axis horizontal, so the image is never rolled
    let horizontal = Vec3::new(-azimuth.sin(), azimuth.cos(), 0.0);
    let x = horizontal.normalize();
    let y = z.cross(&x);
    Camera {
        intrinsics: params.intrinsics,
        pose: Pose6D::new(Mat3::from_columns(&[x, y, z]), position),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{is_rotation, mesh_collision};

    fn spheres() -> BTreeMap<String, TriMesh> {
        BTreeMap::from([("ball".to_string(), shapes::icosphere(0.02, 2))])
    }

    #[test]
    fn spheres_rest_on_the_floor() {
        let params = SceneParams {
            bin: BinSpec {
                size_x: 1.0,
                size_y: 1.0,
                ..Default::default()
            },
            count_range: (3, 3),
            scale_range: (1.0, 1.0),
            ..Default::default()
        };
        let scene = generate_scene(&spheres(), &params, 5).unwrap();
        let meshes = scene.instance_meshes(&spheres()).unwrap();
        for m in &meshes {
            let b = m.bounds();
            // lowest vertex within the settle resolution of the floor
            assert!(b.min.z >= 0.0 && b.min.z < 1e-6, "min z {}", b.min.z);
            let c = b.center();
            assert!((c.z - 0.02).abs() < 1e-3);
        }
    }

    #[test]
    fn settled_scene_is_collision_free_and_deterministic() {
        let models = BTreeMap::from([
            ("screw".to_string(), shapes::screw(&shapes::ScrewDims::default(), 16)),
            ("box".to_string(), shapes::cuboid(Vec3::new(0.03, 0.02, 0.05))),
        ]);
        let params = SceneParams::default();
        let scene = generate_scene(&models, &params, 11).unwrap();
        assert!((4..=6).contains(&scene.instances.len()));
        let meshes = scene.instance_meshes(&models).unwrap();
        let bin = params.bin.mesh();
        let id = Pose6D::identity();
        for (i, a) in meshes.iter().enumerate() {
            assert!(!mesh_collision(a, &id, &bin, &id));
            for b in &meshes[i + 1..] {
                assert!(!mesh_collision(a, &id, b, &id));
            }
            let bb = a.bounds();
            assert!(bb.min.x > -0.125 && bb.max.x < 0.125 && bb.min.y > -0.125 && bb.max.y < 0.125);
        }
        assert!(is_rotation(&scene.camera.pose.rotation));
        let again = generate_scene(&models, &params, 11).unwrap();
        assert_eq!(serde_json::to_string(&scene).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn single_instance_and_errors() {
        let params = SceneParams {
            count_range: (1, 1),
            ..Default::default()
        };
        let scene = generate_scene(&spheres(), &params, 0).unwrap();
        assert_eq!(scene.instances.len(), 1);
        assert!(generate_scene(&BTreeMap::new(), &params, 0).is_err());
        let huge = BTreeMap::from([("slab".to_string(), shapes::cuboid(Vec3::new(0.5, 0.5, 0.01)))]);
        assert!(matches!(generate_scene(&huge, &params, 0), Err(Error::SceneGeneration(_))));
    }
}
