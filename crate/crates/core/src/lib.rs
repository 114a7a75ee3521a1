//! Category-level task-relevant grasp planning.
//!
//! The crate is organised bottom-up:
//!
//! - [`geom`]: meshes, point clouds, poses, nearest-neighbour and distance
//!   queries, collision and ray casting, surface sampling, OBJ/PLY I/O.
//! - [`nunocs`]: the per-axis normalised canonical object space, canonical
//!   template selection, dense correspondence and 9D pose fitting.
//! - [`grasping`]: parallel-jaw gripper model, antipodal grasp sampling, a
//!   quasi-static grasp oracle, neighbourhood scoring, the canonical grasp
//!   codebook and hybrid proposal generation.
//! - [`affordance`]: self-discovered contact heatmaps and task-relevance
//!   scoring of grasp candidates.
//! - [`scenegen`]: synthetic bin clutter with a virtual depth camera and
//!   complete ground truth.
//! - [`segmentation`]: offset-shifted DBSCAN instance segmentation and
//!   visibility ordering.

pub mod affordance;
pub mod error;
pub mod geom;
pub mod grasping;
pub mod nunocs;
pub mod scenegen;
pub mod seed;
pub mod segmentation;

pub use error::{Error, Result};

/// Version tag written into every persisted artifact.
pub const SCHEMA_VERSION: u32 = 1;
