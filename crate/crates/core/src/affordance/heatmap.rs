use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::placement::{path_is_clear, rest_is_ok, PlacementTask};
use crate::geom::io::{read_ply, write_atomic, write_ply, PlyData};
use crate::geom::{PointCloud, TriMesh};
use crate::grasping::{grasp_oracle, Grasp, GripperModel};
use crate::nunocs::store::check_schema;
use crate::nunocs::CanonicalModel;
use crate::{Error, Result, SCHEMA_VERSION};

/// Value of a point no successful grasp has touched.
pub const UNEXPLORED: f64 = 0.5;

/// Per-point grasp-contact counts and the task-success ratio derived from
/// them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactHeatmap {
    pub cloud: PointCloud,
    pub n_g: Vec<u32>,
    pub n_gt: Vec<u32>,
    pub p: Vec<f64>,
}

impl ContactHeatmap {
    /// All counts zero, every value [`UNEXPLORED`].
    pub fn unexplored(cloud: PointCloud) -> Self {
        let n = cloud.len();
        Self {
            cloud,
            n_g: vec![0; n],
            n_gt: vec![0; n],
            p: vec![UNEXPLORED; n],
        }
    }

    /// Heatmap with `p = n_gt / n_g` (or [`UNEXPLORED`] where `n_g = 0`).
    pub fn from_counts(cloud: PointCloud, n_g: Vec<u32>, n_gt: Vec<u32>) -> Result<Self> {
        if n_g.len() != cloud.len() || n_gt.len() != cloud.len() {
            return Err(Error::InvalidInput("heatmap counts do not match the cloud".into()));
        }
        if let Some(i) = (0..n_g.len()).find(|&i| n_gt[i] > n_g[i]) {
            return Err(Error::InvalidInput(format!(
                "heatmap point {i}: n_gt {} exceeds n_g {}",
                n_gt[i], n_g[i]
            )));
        }
        let p = n_g
            .iter()
            .zip(&n_gt)
            .map(|(&g, &gt)| ratio(g, gt))
            .collect();
        Ok(Self { cloud, n_g, n_gt, p })
    }

    /// Same value everywhere, counts zero. Used to disable the affordance
    /// term.
    pub fn constant(cloud: PointCloud, value: f64) -> Self {
        let n = cloud.len();
        Self {
            cloud,
            n_g: vec![0; n],
            n_gt: vec![0; n],
            p: vec![value; n],
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Checks the count and value invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.cloud.len();
        if self.n_g.len() != n || self.n_gt.len() != n || self.p.len() != n {
            return Err(Error::InvalidInput("heatmap arrays have inconsistent lengths".into()));
        }
        for i in 0..n {
            if self.n_gt[i] > self.n_g[i] || !(0.0..=1.0).contains(&self.p[i]) {
                return Err(Error::InvalidInput(format!("heatmap point {i} violates its invariants")));
            }
        }
        Ok(())
    }

    /// Writes `<dir>/heatmap.ply` (points, normals, p_tgg, n_g, n_gt) and
    /// `<dir>/heatmap.json`.
    pub fn save(&self, dir: &Path, category: &str, frame: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let ply = PlyData::from_cloud(&self.cloud)
            .with_scalar("p_tgg", self.p.clone())
            .with_scalar("n_g", self.n_g.iter().map(|&v| f64::from(v)).collect())
            .with_scalar("n_gt", self.n_gt.iter().map(|&v| f64::from(v)).collect());
        write_ply(&dir.join(HEATMAP_PLY), &ply, true)?;
        let meta = HeatmapFile {
            schema_version: SCHEMA_VERSION,
            category: category.to_string(),
            frame: frame.to_string(),
            points: self.len(),
            cloud: HEATMAP_PLY.to_string(),
        };
        let mut json = serde_json::to_vec_pretty(&meta)?;
        json.push(b'\n');
        write_atomic(&dir.join(HEATMAP_JSON), &json)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(HEATMAP_JSON);
        let meta: HeatmapFile = serde_json::from_slice(&std::fs::read(&path)?)?;
        check_schema(&path.display().to_string(), meta.schema_version)?;
        let ply = read_ply(&dir.join(&meta.cloud))?;
        let get = |name: &str| {
            ply.scalar(name)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::parse(dir.join(&meta.cloud), 0, format!("missing vertex property {name}")))
        };
        let counts = |v: Vec<f64>| v.into_iter().map(|x| x as u32).collect::<Vec<_>>();
        let hm = Self {
            p: get("p_tgg")?,
            n_g: counts(get("n_g")?),
            n_gt: counts(get("n_gt")?),
            cloud: ply.to_cloud(),
        };
        hm.validate()?;
        Ok(hm)
    }
}

pub const HEATMAP_PLY: &str = "heatmap.ply";
pub const HEATMAP_JSON: &str = "heatmap.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeatmapFile {
    schema_version: u32,
    category: String,
    frame: String,
    points: usize,
    cloud: String,
}

fn ratio(g: u32, gt: u32) -> f64 {
    if g == 0 {
        UNEXPLORED
    } else {
        f64::from(gt) / f64::from(g)
    }
}

/// Per-grasp trial result: contacts of a stable grasp and whether its
/// placement succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub contacts: Vec<usize>,
    pub placed: bool,
}

/// Runs the lift oracle and, for stable grasps, the placement check.
/// `None` for grasps that fail the lift.
pub fn run_trials(
    object: &TriMesh,
    cloud: &PointCloud,
    grasps: &[Grasp],
    gripper: &GripperModel,
    task: &PlacementTask,
) -> Vec<Option<Trial>> {
    let rest_ok = rest_is_ok(object, task);
    grasps
        .par_iter()
        .map(|g| {
            let out = grasp_oracle(object, cloud, g, gripper);
            if !out.success {
                return None;
            }
            let width = out.closing_width.unwrap_or(g.width);
            Some(Trial {
                placed: rest_ok && path_is_clear(g, width, gripper, task),
                contacts: out.contact_points,
            })
        })
        .collect()
}

/// Accumulates trial outcomes into contact counts. Order-independent.
pub fn accumulate(cloud: PointCloud, trials: &[Option<Trial>]) -> Result<ContactHeatmap> {
    let mut n_g = vec![0u32; cloud.len()];
    let mut n_gt = vec![0u32; cloud.len()];
    for t in trials.iter().flatten() {
        for &i in &t.contacts {
            n_g[i] += 1;
            if t.placed {
                n_gt[i] += 1;
            }
        }
    }
    ContactHeatmap::from_counts(cloud, n_g, n_gt)
}

/// Self-supervised contact heatmap of one object: every contact point of a
/// stable grasp counts towards `n_g`, and towards `n_gt` as well when the
/// grasp also lets the object be placed.
pub fn discover_heatmap(
    object: &TriMesh,
    cloud: &PointCloud,
    grasps: &[Grasp],
    gripper: &GripperModel,
    task: &PlacementTask,
) -> Result<ContactHeatmap> {
    if grasps.is_empty() {
        log::warn!("discover_heatmap: no grasps; heatmap left unexplored");
        return Ok(ContactHeatmap::unexplored(cloud.clone()));
    }
    let trials = run_trials(object, cloud, grasps, gripper, task);
    let stable = trials.iter().flatten().count();
    let placed = trials.iter().flatten().filter(|t| t.placed).count();
    log::info!("discover_heatmap: {} grasps, {stable} stable, {placed} placed", grasps.len());
    accumulate(cloud.clone(), &trials)
}

/// Transfers per-instance heatmaps onto the canonical template: each
/// explored instance point (`n_g > 0`) is mapped into ℂ and assigned to its
/// nearest template point. Template values are the mean of the values they
/// receive ([`UNEXPLORED`] if none); counts are summed.
pub fn aggregate_heatmaps(per_instance: &[(String, ContactHeatmap)], canon: &CanonicalModel) -> Result<ContactHeatmap> {
    let n = canon.template.len();
    let tree = canon.template_tree();
    let mut sum = vec![0.0; n];
    let mut hits = vec![0u32; n];
    let mut n_g = vec![0u32; n];
    let mut n_gt = vec![0u32; n];
    for (id, hm) in per_instance {
        let map = canon.instance_to_canonical(id)?;
        for (i, p) in hm.cloud.points.iter().enumerate() {
            if hm.n_g[i] == 0 {
                continue;
            }
            let (j, _) = tree.nearest(&map.transform_point(p)).expect("template is non-empty");
            sum[j] += hm.p[i];
            hits[j] += 1;
            n_g[j] += hm.n_g[i];
            n_gt[j] += hm.n_gt[i];
        }
    }
    let p = (0..n)
        .map(|j| if hits[j] == 0 { UNEXPLORED } else { sum[j] / f64::from(hits[j]) })
        .collect();
    Ok(ContactHeatmap {
        cloud: canon.template.as_cloud(),
        n_g,
        n_gt,
        p,
    })
}
