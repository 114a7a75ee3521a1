use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::io::{load_mesh, write_atomic, write_obj};
use crate::geom::{shapes, Aabb, Mat3, TriMesh, Vec3};
use crate::{Error, Result, SCHEMA_VERSION};

/// Parameters of a parallel-jaw gripper. Lengths in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GripperParams {
    pub max_opening: f64,
    /// Finger length along the approach axis.
    pub finger_depth: f64,
    /// Finger extent along the closing axis.
    pub finger_thickness: f64,
    /// Finger extent along the third axis.
    pub finger_width: f64,
    pub palm_thickness: f64,
    /// How far the fingertips reach past the gripper origin along the
    /// approach axis.
    pub tip_offset: f64,
    pub friction_mu: f64,
    /// Cloud points this close to a closed finger count as contacts.
    pub contact_eps: f64,
    /// Unit approach axis in the gripper frame (points toward the object).
    pub approach_axis: Vec3,
    /// Unit closing axis in the gripper frame.
    pub closing_axis: Vec3,
}

impl Default for GripperParams {
    fn default() -> Self {
        Self {
            max_opening: 0.05,
            finger_depth: 0.03,
            finger_thickness: 0.006,
            finger_width: 0.012,
            palm_thickness: 0.01,
            tip_offset: 0.002,
            friction_mu: 0.4,
            contact_eps: 0.001,
            approach_axis: Vec3::z(),
            closing_axis: Vec3::x(),
        }
    }
}

/// Finger and palm meshes in the gripper frame.
///
/// `finger` is the finger on the `+closing` side with its inner face on the
/// plane `closing · p = 0`; it is translated by `±width/2` along the closing
/// axis when placed. The `−closing` finger is its mirror image.
#[derive(Debug, Clone)]
pub struct GripperModel {
    pub params: GripperParams,
    pub finger: TriMesh,
    pub finger_mirror: TriMesh,
    pub palm: TriMesh,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GripperFile {
    schema_version: u32,
    params: GripperParams,
    finger_mesh: String,
    palm_mesh: String,
}

impl GripperModel {
    /// Box fingers and palm generated from the parameters.
    pub fn new(params: GripperParams) -> Result<Self> {
        let b = basis(&params)?;
        if !(params.max_opening > 0.0) {
            return Err(Error::InvalidInput("max_opening must be positive".into()));
        }
        let p = &params;
        let tip = p.tip_offset;
        let root = tip - p.finger_depth;
        let hw = p.finger_width / 2.0;
        let finger_local = shapes::cuboid_between(Vec3::new(0.0, -hw, root), Vec3::new(p.finger_thickness, hw, tip));
        let half_span = p.max_opening / 2.0 + p.finger_thickness;
        let palm_local = shapes::cuboid_between(
            Vec3::new(-half_span, -hw, root - p.palm_thickness),
            Vec3::new(half_span, hw, root),
        );
        let to_frame = crate::geom::Pose6D::new(b, Vec3::zeros());
        Self::from_meshes(params, finger_local.transformed(&to_frame), palm_local.transformed(&to_frame))
    }

    pub fn from_meshes(params: GripperParams, finger: TriMesh, palm: TriMesh) -> Result<Self> {
        basis(&params)?;
        let finger_mirror = finger.mirrored(&params.closing_axis);
        Ok(Self {
            params,
            finger,
            finger_mirror,
            palm,
        })
    }

    pub fn closing(&self) -> Vec3 {
        self.params.closing_axis
    }

    pub fn approach(&self) -> Vec3 {
        self.params.approach_axis
    }

    /// Gripper-frame rotation whose columns are (closing, approach × closing,
    /// approach).
    pub fn basis(&self) -> Mat3 {
        basis(&self.params).expect("validated at construction")
    }

    /// Offset of the `+closing` finger when the jaws are `width` apart; the
    /// other finger sits at the negated offset.
    pub fn finger_offset(&self, width: f64) -> Vec3 {
        self.closing() * (width / 2.0)
    }

    /// Both fingers at `width` and the palm, in the gripper frame.
    pub fn open_parts(&self, width: f64) -> [TriMesh; 3] {
        let off = self.finger_offset(width);
        [
            shapes::translated(&self.finger, off),
            shapes::translated(&self.finger_mirror, -off),
            self.palm.clone(),
        ]
    }

    /// Gripper-frame boxes of the open gripper's parts.
    pub fn open_boxes(&self, width: f64) -> [Aabb; 3] {
        let off = self.finger_offset(width);
        let f = self.finger.bounds();
        let m = self.finger_mirror.bounds();
        [
            Aabb { min: f.min + off, max: f.max + off },
            Aabb { min: m.min - off, max: m.max - off },
            self.palm.bounds(),
        ]
    }

    /// Writes `gripper.json`, `finger.obj` and `palm.obj`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_obj(&dir.join("finger.obj"), &self.finger)?;
        write_obj(&dir.join("palm.obj"), &self.palm)?;
        let file = GripperFile {
            schema_version: SCHEMA_VERSION,
            params: self.params,
            finger_mesh: "finger.obj".into(),
            palm_mesh: "palm.obj".into(),
        };
        let mut json = serde_json::to_vec_pretty(&file)?;
        json.push(b'\n');
        write_atomic(&dir.join("gripper.json"), &json)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("gripper.json");
        let file: GripperFile = serde_json::from_slice(&std::fs::read(&path)?)?;
        crate::nunocs::store::check_schema(&path.display().to_string(), file.schema_version)?;
        let finger = load_mesh(&dir.join(&file.finger_mesh), 1.0)?;
        let palm = load_mesh(&dir.join(&file.palm_mesh), 1.0)?;
        Self::from_meshes(file.params, finger, palm)
    }
}

fn basis(p: &GripperParams) -> Result<Mat3> {
    let a = p.approach_axis;
    let c = p.closing_axis;
    if (a.norm() - 1.0).abs() > 1e-9 || (c.norm() - 1.0).abs() > 1e-9 || a.dot(&c).abs() > 1e-9 {
        return Err(Error::InvalidInput(
            "gripper approach and closing axes must be orthogonal unit vectors".into(),
        ));
    }
    Ok(Mat3::from_columns(&[c, a.cross(&c), a]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry() {
        let g = GripperModel::new(GripperParams::default()).unwrap();
        let f = g.finger.bounds();
        assert!((f.min.x - 0.0).abs() < 1e-15 && (f.max.x - 0.006).abs() < 1e-15);
        assert!((f.max.z - 0.002).abs() < 1e-15);
        let m = g.finger_mirror.bounds();
        assert!((m.max.x - 0.0).abs() < 1e-15 && (m.min.x + 0.006).abs() < 1e-15);
        assert!(g.finger_mirror.volume() > 0.0);
        let [a, b, _] = g.open_boxes(0.02);
        assert!((a.min.x - 0.01).abs() < 1e-15 && (b.max.x + 0.01).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_orthogonal_axes() {
        let p = GripperParams {
            closing_axis: Vec3::new(1.0, 0.0, 1.0).normalize(),
            ..Default::default()
        };
        assert!(GripperModel::new(p).is_err());
    }

    #[test]
    fn directory_round_trip() {
        let g = GripperModel::new(GripperParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        g.save(dir.path()).unwrap();
        let back = GripperModel::load(dir.path()).unwrap();
        assert_eq!(back.params, g.params);
        assert_eq!(back.finger, g.finger);
    }
}
