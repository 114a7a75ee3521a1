//! Dataset directory layout, one directory per scene:
//!
//! - `scene.json`: the [`Scene`] (instances, camera, seed).
//! - `depth.pfm`: little-endian f32 depth, rows bottom to top.
//! - `cloud.ply`: scene cloud with normals and per-point `instance_id`,
//!   `pixel_u`, `pixel_v`, `offset_{x,y,z}` and `nunocs_{x,y,z}`.
//! - `gt.json`: per-instance centres and NUNOCS → camera poses.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_pfm, DepthImage, GroundTruth, Rendered, Scene, NO_INSTANCE};
use crate::geom::io::{read_ply, write_atomic, write_ply, PlyData};
use crate::geom::{PointCloud, Pose9D, Vec3};
use crate::nunocs::store::check_schema;
use crate::{Error, Result, SCHEMA_VERSION};

pub const SCENE_JSON: &str = "scene.json";
pub const DEPTH_PFM: &str = "depth.pfm";
pub const CLOUD_PLY: &str = "cloud.ply";
pub const GT_JSON: &str = "gt.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GtFile {
    schema_version: u32,
    model_ids: Vec<String>,
    centers: Vec<Vec3>,
    poses: Vec<Pose9D>,
}

/// A scene loaded back from disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub scene: Scene,
    pub depth: DepthImage,
    pub cloud: PointCloud,
    pub gt: GroundTruth,
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v)?;
    out.push(b'\n');
    Ok(out)
}

pub fn save_dataset(dir: &Path, scene: &Scene, rendered: &Rendered) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join(SCENE_JSON), &json_bytes(scene)?)?;
    rendered.depth.write_pfm(&dir.join(DEPTH_PFM))?;
    let gt = &rendered.gt;
    let col = |f: &dyn Fn(usize) -> f64| (0..gt.point_ids.len()).map(f).collect::<Vec<_>>();
    let mut ply = PlyData::from_cloud(&rendered.cloud)
        .with_scalar("instance_id", col(&|i| f64::from(gt.point_ids[i])))
        .with_scalar("pixel_u", col(&|i| f64::from(gt.point_pixels[i][0])))
        .with_scalar("pixel_v", col(&|i| f64::from(gt.point_pixels[i][1])));
    for (d, axis) in ["x", "y", "z"].iter().enumerate() {
        ply = ply.with_scalar(&format!("offset_{axis}"), col(&|i| gt.offsets[i][d]));
    }
    for (d, axis) in ["x", "y", "z"].iter().enumerate() {
        ply = ply.with_scalar(&format!("nunocs_{axis}"), col(&|i| gt.nunocs[i][d]));
    }
    write_ply(&dir.join(CLOUD_PLY), &ply, true)?;
    let meta = GtFile {
        schema_version: SCHEMA_VERSION,
        model_ids: scene.instances.iter().map(|i| i.model_id.clone()).collect(),
        centers: gt.centers.clone(),
        poses: gt.poses.clone(),
    };
    write_atomic(&dir.join(GT_JSON), &json_bytes(&meta)?)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let scene_path = dir.join(SCENE_JSON);
    let scene: Scene = serde_json::from_slice(&std::fs::read(&scene_path)?)?;
    check_schema(&scene_path.display().to_string(), scene.schema_version)?;
    let k = scene.camera.intrinsics;
    let (w, h, data) = read_pfm(&dir.join(DEPTH_PFM))?;
    if (w, h) != (k.width, k.height) {
        return Err(Error::parse(dir.join(DEPTH_PFM), 0, format!("depth is {w}×{h}, camera is {}×{}", k.width, k.height)));
    }
    let ply_path = dir.join(CLOUD_PLY);
    let ply = read_ply(&ply_path)?;
    let get = |name: &str| {
        ply.scalar(name)
            .ok_or_else(|| Error::parse(&ply_path, 0, format!("missing vertex property {name}")))
    };
    let ids = get("instance_id")?;
    let (pu, pv) = (get("pixel_u")?, get("pixel_v")?);
    let vec3 = |prefix: &str| -> Result<Vec<Vec3>> {
        let (x, y, z) = (get(&format!("{prefix}_x"))?, get(&format!("{prefix}_y"))?, get(&format!("{prefix}_z"))?);
        Ok((0..x.len()).map(|i| Vec3::new(x[i], y[i], z[i])).collect())
    };
    let gt_path = dir.join(GT_JSON);
    let meta: GtFile = serde_json::from_slice(&std::fs::read(&gt_path)?)?;
    check_schema(&gt_path.display().to_string(), meta.schema_version)?;
    if meta.poses.len() != scene.instances.len() || meta.centers.len() != scene.instances.len() {
        return Err(Error::parse(&gt_path, 0, "instance count differs from the scene"));
    }
    let point_ids: Vec<i32> = ids.iter().map(|&v| v as i32).collect();
    let point_pixels: Vec<[u32; 2]> = pu.iter().zip(pv).map(|(&u, &v)| [u as u32, v as u32]).collect();
    let mut pixel_ids = vec![NO_INSTANCE; k.pixels()];
    for (id, [u, v]) in point_ids.iter().zip(&point_pixels) {
        pixel_ids[*v as usize * k.width + *u as usize] = *id;
    }
    let gt = GroundTruth {
        pixel_ids,
        point_ids,
        point_pixels,
        offsets: vec3("offset")?,
        nunocs: vec3("nunocs")?,
        centers: meta.centers,
        poses: meta.poses,
    };
    Ok(Dataset {
        depth: DepthImage { intrinsics: k, data },
        cloud: ply.to_cloud(),
        scene,
        gt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes;
    use crate::scenegen::{generate_scene, render_depth, SceneParams};
    use std::collections::BTreeMap;

    #[test]
    fn dataset_round_trip() {
        let models = BTreeMap::from([("box".to_string(), shapes::cuboid(Vec3::new(0.03, 0.02, 0.05)))]);
        let scene = generate_scene(&models, &SceneParams::default(), 8).unwrap();
        let r = render_depth(&scene, &models).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &scene, &r).unwrap();
        let d = load_dataset(dir.path()).unwrap();
        // poses persist as quaternions, so rotations round-trip to rounding
        assert_eq!(d.scene.instances.len(), scene.instances.len());
        for (a, b) in d.scene.instances.iter().zip(&scene.instances) {
            assert_eq!((&a.model_id, a.scale, a.pose.translation), (&b.model_id, b.scale, b.pose.translation));
            assert!((a.pose.rotation - b.pose.rotation).abs().max() < 1e-14);
        }
        assert!((d.scene.camera.pose.rotation - scene.camera.pose.rotation).abs().max() < 1e-14);
        assert_eq!(d.cloud, r.cloud);
        assert_eq!(d.gt.point_ids, r.gt.point_ids);
        assert_eq!(d.gt.pixel_ids, r.gt.pixel_ids);
        assert_eq!(d.gt.offsets, r.gt.offsets);
        assert_eq!(d.gt.nunocs, r.gt.nunocs);
        assert_eq!(d.gt.centers, r.gt.centers);
        for (a, b) in d.gt.poses.iter().zip(&r.gt.poses) {
            assert!((a.rotation - b.rotation).abs().max() < 1e-14);
            assert_eq!((a.translation, a.scale), (b.translation, b.scale));
        }
        for (a, b) in d.depth.data.iter().zip(&r.depth.data) {
            assert!((a - b).abs() <= 1e-6 * b.abs());
        }
        let bytes = std::fs::read(dir.path().join(SCENE_JSON)).unwrap();
        let other = tempfile::tempdir().unwrap();
        save_dataset(other.path(), &scene, &render_depth(&scene, &models).unwrap()).unwrap();
        for f in [SCENE_JSON, DEPTH_PFM, CLOUD_PLY, GT_JSON] {
            assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(other.path().join(f)).unwrap());
        }
        assert!(!bytes.is_empty());
    }
}
