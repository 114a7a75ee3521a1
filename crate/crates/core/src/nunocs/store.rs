//! On-disk layout of a canonical model directory:
//!
//! ```text
//! canonical.json       metadata, frames, instance registrations
//! template.ply         template surface samples in ℂ (binary, with normals)
//! template_mesh.ply    template mesh in ℂ (binary)
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CanonicalModel, CanonicalParams, NunocsCloud, NunocsFrame};
use crate::geom::io::{read_ply, write_atomic, write_ply, PlyData};
use crate::geom::{Pose9D, TriMesh};
use crate::{Error, Result, SCHEMA_VERSION};

pub const CANONICAL_JSON: &str = "canonical.json";
pub const TEMPLATE_PLY: &str = "template.ply";
pub const TEMPLATE_MESH_PLY: &str = "template_mesh.ply";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CanonicalFile {
    schema_version: u32,
    category: String,
    template_index: usize,
    template_frame: NunocsFrame,
    instance_ids: Vec<String>,
    instance_frames: Vec<NunocsFrame>,
    instance_poses: BTreeMap<String, Pose9D>,
    chamfer_sums: Vec<f64>,
    params: CanonicalParams,
    template_cloud: String,
    template_mesh: String,
}

pub fn check_schema(what: &str, found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::Schema {
            what: what.to_string(),
            found,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(())
}

pub fn save_canonical(dir: &Path, canon: &CanonicalModel) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let meta = CanonicalFile {
        schema_version: SCHEMA_VERSION,
        category: canon.category.clone(),
        template_index: canon.template_index,
        template_frame: canon.template.frame(),
        instance_ids: canon.instance_ids.clone(),
        instance_frames: canon.instance_frames.clone(),
        instance_poses: canon.instance_poses.clone(),
        chamfer_sums: canon.chamfer_sums.clone(),
        params: canon.params,
        template_cloud: TEMPLATE_PLY.into(),
        template_mesh: TEMPLATE_MESH_PLY.into(),
    };
    write_ply(&dir.join(TEMPLATE_PLY), &PlyData::from_cloud(&canon.template.as_cloud()), true)?;
    write_ply(&dir.join(TEMPLATE_MESH_PLY), &PlyData::from_mesh(&canon.template_mesh), true)?;
    let mut json = serde_json::to_vec_pretty(&meta)?;
    json.push(b'\n');
    write_atomic(&dir.join(CANONICAL_JSON), &json)
}

pub fn load_canonical(dir: &Path) -> Result<CanonicalModel> {
    let path = dir.join(CANONICAL_JSON);
    let meta: CanonicalFile = serde_json::from_slice(&std::fs::read(&path)?)?;
    check_schema(&path.display().to_string(), meta.schema_version)?;
    let cloud = read_ply(&dir.join(&meta.template_cloud))?;
    let mesh = read_ply(&dir.join(&meta.template_mesh))?;
    let template = NunocsCloud {
        points: cloud.vertices,
        normals: cloud.normals,
        source_extents: meta.template_frame.extents,
        source_min: meta.template_frame.min,
    };
    Ok(CanonicalModel::from_parts(
        meta.category,
        meta.template_index,
        template,
        TriMesh::new(mesh.vertices, mesh.faces)?,
        meta.instance_ids,
        meta.instance_frames,
        meta.instance_poses,
        meta.chamfer_sums,
        meta.params,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes;
    use crate::nunocs::build_canonical;

    #[test]
    fn round_trip() {
        let m = shapes::cuboid(crate::geom::Vec3::new(0.03, 0.02, 0.01));
        let c = build_canonical(&[m.clone(), m.scaled(&crate::geom::Vec3::new(2.0, 1.0, 1.0))], &CanonicalParams {
            sample_radius: 0.003,
            ..Default::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_canonical(dir.path(), &c).unwrap();
        let back = load_canonical(dir.path()).unwrap();
        assert_eq!(back.template, c.template);
        assert_eq!(back.template_mesh, c.template_mesh);
        assert_eq!(back.instance_ids, c.instance_ids);
        for (k, p) in &c.instance_poses {
            let q = back.instance_poses[k];
            assert!((q.rotation - p.rotation).norm() < 1e-12);
            assert_eq!(q.scale, p.scale);
        }
    }
}
