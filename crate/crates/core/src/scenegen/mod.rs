//! Synthetic bin clutter: geometric settling of model instances in an open
//! bin, a pinhole depth camera and complete per-point ground truth.

mod camera;
mod render;
mod scene;
mod store;

pub use camera::{pfm_bytes, read_pfm, DepthImage, Intrinsics};
pub use render::{render_depth, GroundTruth, Rendered, NO_INSTANCE};
pub use scene::{generate_scene, random_rotation, BinSpec, Camera, Scene, SceneInstance, SceneParams};
pub use store::{load_dataset, save_dataset, Dataset, CLOUD_PLY, DEPTH_PFM, GT_JSON, SCENE_JSON};
