//! Single TOML configuration for every stage. Unknown keys are rejected;
//! every section and field is optional and falls back to its default.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use taskgrasp_core::grasping::{CodebookParams, GripperParams, PerturbParams, ProposalParams, SampleParams};
use taskgrasp_core::nunocs::{AlignParams, CanonicalParams};
use taskgrasp_core::scenegen::SceneParams;
use taskgrasp_core::segmentation::DbscanParams;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Root seed; every stage derives its own sub-seed from it.
    pub seed: u64,
    pub models: ModelsConfig,
    pub gripper: GripperParams,
    pub canonical: CanonicalParams,
    pub codebook: CodebookParams,
    pub heatmap: HeatmapConfig,
    pub scenes: SceneParams,
    pub segmentation: SegmentationConfig,
    pub alignment: AlignParams,
    pub proposal: ProposalParams,
    pub planning: PlanningConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelsConfig {
    /// Category name recorded in every artifact.
    pub category: String,
    /// Factor converting model file units to metres.
    pub scale_to_m: f64,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            category: "default".into(),
            scale_to_m: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatmapConfig {
    /// Poisson-disk radius of the per-instance contact clouds, metres.
    pub sample_radius: f64,
    /// Trial grasps sampled per instance.
    pub grasps_per_instance: usize,
    /// Also try the codebook grasps mapped onto each instance.
    pub include_codebook: bool,
    pub sample: SampleParams,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            sample_radius: 0.0015,
            grasps_per_instance: 600,
            include_codebook: true,
            sample: SampleParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentationConfig {
    pub dbscan: DbscanParams,
    /// Gaussian noise added to ground-truth offsets, metres.
    pub offset_sigma: f64,
    /// Scene points closer than this to the known bin are background.
    pub background_margin: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            dbscan: DbscanParams::default(),
            offset_sigma: 0.0,
            background_margin: 0.0015,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanningConfig {
    /// Pose noise for P(G) of each proposal.
    pub perturb: PerturbParams,
    /// Rank proposals of every segment instead of stopping at the first
    /// segment (in visibility order) that yields one.
    pub exhaustive: bool,
    /// P(T|G) of a grasp that touches no template point.
    pub no_contact_relevance: f64,
    /// Segments with fewer points are skipped.
    pub min_segment_points: usize,
    /// Ranked grasps written to the plan file; 0 keeps all.
    pub max_ranked: usize,
}

impl Default for PlanningConfig {
    fn default() -> Self {
        Self {
            perturb: PerturbParams::default(),
            exhaustive: false,
            no_contact_relevance: 0.0,
            min_segment_points: 50,
            max_ranked: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Pick attempts per scene; each attempt removes the targeted
    /// instance. 0 means one attempt per instance.
    pub max_picks: usize,
    /// Poisson-disk radius of the ground-truth instance clouds, metres.
    pub sample_radius: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            max_picks: 0,
            sample_radius: 0.0015,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_unknown_keys_fail() {
        let c = Config::default();
        let text = c.to_toml().unwrap();
        assert_eq!(Config::parse(&text).unwrap(), c);
        assert_eq!(Config::parse("").unwrap(), c);
        let partial = Config::parse("seed = 7\n[planning]\nexhaustive = true\n").unwrap();
        assert_eq!(partial.seed, 7);
        assert!(partial.planning.exhaustive);
        assert_eq!(partial.planning.perturb, PerturbParams::default());
        assert!(Config::parse("sede = 7\n").is_err());
        assert!(Config::parse("[planning]\nexhaustiv = true\n").is_err());
    }
}
