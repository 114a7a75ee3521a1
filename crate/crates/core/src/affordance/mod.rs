//! Task affordance: which contact regions let a grasped object still be
//! placed. Heatmaps are discovered per instance by trial, aggregated onto the
//! canonical template, and read back at planning time.

mod heatmap;
mod placement;
mod relevance;

pub use heatmap::{
    accumulate, aggregate_heatmaps, discover_heatmap, run_trials, ContactHeatmap, Trial, HEATMAP_JSON, HEATMAP_PLY,
    UNEXPLORED,
};
pub use placement::{path_is_clear, placement_check, rest_is_ok, rest_is_stable, screw_collar_task, PlacementTask};
pub use relevance::{joint_score, task_relevance, task_relevance_or, NO_CONTACT_RELEVANCE};
