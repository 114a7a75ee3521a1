//! Parallel-jaw grasps: gripper model, deterministic success oracle,
//! antipodal sampling, perturbation scoring, the ℂ codebook and per-segment
//! proposals.

mod codebook;
mod grasp;
mod gripper;
mod propose;
mod sample;
mod score;

pub use codebook::{build_codebook, CodebookEntry, CodebookParams, GraspCodebook, InstanceStats};
pub use grasp::{antipodal, close_fingers, grasp_oracle, grasp_oracle_mu, Closing, Grasp, GraspOutcome};
pub use gripper::{GripperModel, GripperParams};
pub use propose::{collides_with_cloud, propose_grasps, reachable, Proposal, ProposalParams, ProposalSource};
pub use sample::{sample_grasps, SampleParams, SampleReport};
pub use score::{perturbed_pose, score_grasp, PerturbParams};
