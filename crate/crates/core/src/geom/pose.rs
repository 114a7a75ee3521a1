use nalgebra::{Rotation3, UnitQuaternion};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Mat3, Vec3};

/// Nearest rotation matrix in the Frobenius sense (SVD projection, det +1).
pub fn orthonormalize(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut fix = Mat3::identity();
        fix[(2, 2)] = -1.0;
        r = u * fix * vt;
    }
    r
}

/// Rotation from an axis-angle vector (angle = norm).
pub fn rotation_from_rotvec(v: &Vec3) -> Mat3 {
    *Rotation3::from_scaled_axis(*v).matrix()
}

pub fn rotation_about(axis: &Vec3, angle: f64) -> Mat3 {
    rotation_from_rotvec(&(axis.normalize() * angle))
}

/// Minimal rotation taking unit vector `from` onto unit vector `to`.
pub fn rotation_between(from: &Vec3, to: &Vec3) -> Mat3 {
    let a = from.normalize();
    let b = to.normalize();
    let c = a.dot(&b);
    if c < -1.0 + 1e-12 {
        // antiparallel: half turn about any axis orthogonal to `a`
        let helper = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let axis = a.cross(&helper).normalize();
        return rotation_about(&axis, std::f64::consts::PI);
    }
    let axis = a.cross(&b);
    let s = axis.norm();
    if s < 1e-15 {
        return Mat3::identity();
    }
    rotation_about(&(axis / s), s.atan2(c))
}

fn quat_of(r: &Mat3) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    let q = q.quaternion();
    // canonical hemisphere so the encoding is unique
    let s = if q.w < 0.0 { -1.0 } else { 1.0 };
    [s * q.w, s * q.i, s * q.j, s * q.k]
}

fn mat_of(q: &[f64; 4]) -> Mat3 {
    let uq = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
    *uq.to_rotation_matrix().matrix()
}

/// Rigid transform: `p' = R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose6D {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for Pose6D {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose6D {
    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Mat3::identity(), Vec3::zeros())
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Mat3::identity(), t)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose6D) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn is_valid(&self) -> bool {
        super::is_rotation(&self.rotation) && super::is_finite(&self.translation)
    }

    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        quat_of(&self.rotation)
    }

    pub fn from_quaternion(q: [f64; 4], t: Vec3) -> Self {
        Self::new(mat_of(&q), t)
    }
}

/// Rotation + translation + per-axis scale: `p' = R·diag(s)·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose9D {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub scale: Vec3,
}

impl Default for Pose9D {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose9D {
    pub fn new(rotation: Mat3, translation: Vec3, scale: Vec3) -> Self {
        Self {
            rotation,
            translation,
            scale,
        }
    }

    pub fn identity() -> Self {
        Self::new(Mat3::identity(), Vec3::zeros(), Vec3::repeat(1.0))
    }

    pub fn from_rigid(p: &Pose6D) -> Self {
        Self::new(p.rotation, p.translation, Vec3::repeat(1.0))
    }

    pub fn rigid(&self) -> Pose6D {
        Pose6D::new(self.rotation, self.translation)
    }

    pub fn is_valid(&self) -> bool {
        super::is_rotation(&self.rotation)
            && super::is_finite(&self.translation)
            && self.scale.iter().all(|s| s.is_finite() && *s > 0.0)
    }

    /// The linear part `R·diag(s)`.
    pub fn linear(&self) -> Mat3 {
        self.rotation * Mat3::from_diagonal(&self.scale)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * self.scale.component_mul(p) + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        (self.rotation.transpose() * (p - self.translation)).component_div(&self.scale)
    }

    /// Normals transform by the inverse transpose `R·diag(s)⁻¹`.
    pub fn transform_normal(&self, n: &Vec3) -> Vec3 {
        (self.rotation * n.component_div(&self.scale)).normalize()
    }

    pub fn inverse_transform_normal(&self, n: &Vec3) -> Vec3 {
        (self.rotation.transpose() * n).component_mul(&self.scale).normalize()
    }

    /// `self ∘ inner` for an inner map without rotation. The result stays a
    /// [`Pose9D`] because both scalings are diagonal in the same frame.
    pub fn compose_axis_aligned(&self, inner: &Pose9D) -> Pose9D {
        debug_assert!((inner.rotation - Mat3::identity()).abs().max() < 1e-12);
        Pose9D::new(
            self.rotation,
            self.transform_point(&inner.translation),
            self.scale.component_mul(&inner.scale),
        )
    }

    /// Rigid transform applied after `self`.
    pub fn then_rigid(&self, outer: &Pose6D) -> Pose9D {
        Pose9D::new(
            outer.rotation * self.rotation,
            outer.transform_point(&self.translation),
            self.scale,
        )
    }

    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        quat_of(&self.rotation)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Pose6DRepr {
    quaternion: [f64; 4],
    translation: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Pose9DRepr {
    quaternion: [f64; 4],
    translation: [f64; 3],
    scale: [f64; 3],
}

impl Serialize for Pose6D {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        Pose6DRepr {
            quaternion: self.quaternion_wxyz(),
            translation: self.translation.into(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose6D {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = Pose6DRepr::deserialize(d)?;
        Ok(Pose6D::from_quaternion(r.quaternion, r.translation.into()))
    }
}

impl Serialize for Pose9D {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        Pose9DRepr {
            quaternion: self.quaternion_wxyz(),
            translation: self.translation.into(),
            scale: self.scale.into(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose9D {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = Pose9DRepr::deserialize(d)?;
        Ok(Pose9D::new(mat_of(&r.quaternion), r.translation.into(), r.scale.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_between_handles_antiparallel() {
        let r = rotation_between(&Vec3::z(), &-Vec3::z());
        assert!((r * Vec3::z() + Vec3::z()).norm() < 1e-12);
        assert!(super::super::is_rotation(&r));
        let r = rotation_between(&Vec3::x(), &Vec3::new(1.0, 1.0, 0.0));
        assert!((r * Vec3::x() - Vec3::new(1.0, 1.0, 0.0).normalize()).norm() < 1e-12);
    }

    #[test]
    fn pose9d_inverse_round_trip() {
        let p = Pose9D::new(
            rotation_about(&Vec3::new(0.3, -1.0, 0.2), 1.1),
            Vec3::new(0.5, -2.0, 3.0),
            Vec3::new(1.5, 0.7, 2.0),
        );
        let x = Vec3::new(0.1, 0.2, -0.3);
        assert!((p.inverse_transform_point(&p.transform_point(&x)) - x).norm() < 1e-12);
        let n = Vec3::new(1.0, 2.0, -0.5).normalize();
        assert!((p.inverse_transform_normal(&p.transform_normal(&n)) - n).norm() < 1e-12);
    }

    #[test]
    fn quaternion_serialisation_round_trip() {
        let p = Pose6D::new(rotation_about(&Vec3::new(1.0, 2.0, 3.0), 2.5), Vec3::new(1.0, 2.0, 3.0));
        let s = serde_json::to_string(&p).unwrap();
        let q: Pose6D = serde_json::from_str(&s).unwrap();
        assert!((q.rotation - p.rotation).abs().max() < 1e-12);
        assert!(q.is_valid());
    }

    #[test]
    fn orthonormalize_projects_noisy_rotation() {
        let r = rotation_about(&Vec3::y(), 0.4);
        let noisy = r + Mat3::new(1e-3, 0.0, 2e-3, 0.0, -1e-3, 0.0, 0.0, 0.0, 1e-3);
        let o = orthonormalize(&noisy);
        assert!(super::super::is_rotation(&o));
        assert!((o - r).norm() < 1e-2);
    }
}
