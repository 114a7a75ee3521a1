//! Geometric foundation shared by every other module.

mod aabb;
mod cloud;
pub mod collision;
pub mod distance;
pub mod io;
pub mod kdtree;
mod mesh;
mod pose;
pub mod raycast;
pub mod sampling;
pub mod shapes;

pub use aabb::Aabb;
pub use cloud::{inverse_transform_cloud, transform_cloud, PointCloud};
pub use collision::{mesh_collision, meshes_intersect, triangles_intersect};
pub use distance::{chamfer_distance, signed_distance, signed_distance_checked, SignedDistance};
pub use io::{load_mesh, PlyData};
pub use kdtree::KdTree;
pub use mesh::TriMesh;
pub use pose::{orthonormalize, rotation_about, rotation_between, rotation_from_rotvec, Pose6D, Pose9D};
pub use sampling::poisson_disk_sample;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Tolerance for the rotation-matrix invariant `RᵀR = I`, `det R = 1`.
pub const ROTATION_TOL: f64 = 1e-9;

pub fn is_rotation(r: &Mat3) -> bool {
    let err = (r.transpose() * r - Mat3::identity()).abs().max();
    err <= ROTATION_TOL && (r.determinant() - 1.0).abs() <= ROTATION_TOL
}

pub fn is_finite(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}
