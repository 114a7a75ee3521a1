use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::fit::{fit_pairs, RansacParams};
use super::normalize::{to_nunocs_in, NunocsCloud, NunocsFrame};
use crate::geom::{chamfer_distance, poisson_disk_sample, KdTree, Mat3, TriMesh, Vec3};
use crate::geom::distance::one_sided_chamfer;
use crate::{Error, Result};

/// Pairs `(observed index, template index, distance in ℂ)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pub pairs: Vec<(usize, usize, f64)>,
}

impl CorrespondenceSet {
    /// Same pairs with the two index roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            pairs: self.pairs.iter().map(|&(a, b, d)| (b, a, d)).collect(),
        }
    }

    pub fn template_indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.1).collect()
    }
}

/// Discrete rotational symmetry of a category, expressed in ℂ about the
/// cube centre.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Symmetry {
    #[default]
    None,
    /// `folds`-fold rotation about the ℂ axis `axis` (0 = x, 1 = y, 2 = z).
    Revolution { axis: usize, folds: usize },
}

pub const CUBE_CENTRE: Vec3 = Vec3::new(0.5, 0.5, 0.5);

impl Symmetry {
    /// All symmetry rotations, identity first.
    pub fn rotations(&self) -> Vec<Mat3> {
        match *self {
            Symmetry::None => vec![Mat3::identity()],
            Symmetry::Revolution { axis, folds } => {
                let mut a = Vec3::zeros();
                a[axis.min(2)] = 1.0;
                (0..folds.max(1))
                    .map(|k| {
                        crate::geom::rotation_about(&a, std::f64::consts::TAU * k as f64 / folds.max(1) as f64)
                    })
                    .collect()
            }
        }
    }

    /// Applies rotation `r` about the cube centre.
    pub fn apply(r: &Mat3, c: &Vec3) -> Vec3 {
        r * (c - CUBE_CENTRE) + CUBE_CENTRE
    }

    /// Mean distance between paired ℂ coordinates, minimised over the
    /// symmetry group.
    pub fn mean_error(&self, predicted: &[Vec3], truth: &[Vec3]) -> f64 {
        let n = predicted.len().max(1) as f64;
        self.rotations()
            .iter()
            .map(|r| {
                predicted
                    .iter()
                    .zip(truth)
                    .map(|(p, t)| (Self::apply(r, p) - t).norm())
                    .sum::<f64>()
                    / n
            })
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CanonicalParams {
    /// Poisson-disk radius on each source mesh (m).
    pub sample_radius: f64,
    pub seed: u64,
    pub symmetry: Symmetry,
    /// Rounds of nearest-neighbour re-pairing when registering each
    /// instance to the template.
    pub register_iterations: usize,
}

impl Default for CanonicalParams {
    fn default() -> Self {
        Self {
            sample_radius: 0.002,
            seed: 0,
            symmetry: Symmetry::None,
            register_iterations: 15,
        }
    }
}

/// Category-level canonical model: the template instance's surface in ℂ
/// plus every instance's registration to it.
#[derive(Debug, Clone)]
pub struct CanonicalModel {
    pub category: String,
    pub template_index: usize,
    /// Dense surface samples of the template in ℂ, with normals.
    pub template: NunocsCloud,
    /// Template mesh in ℂ.
    pub template_mesh: TriMesh,
    pub instance_ids: Vec<String>,
    /// Normalisation frame of each instance mesh.
    pub instance_frames: Vec<NunocsFrame>,
    /// Instance ℂ → template ℂ.
    pub instance_poses: BTreeMap<String, crate::geom::Pose9D>,
    /// Σ_j Chamfer(i, j) per instance, in ℂ.
    pub chamfer_sums: Vec<f64>,
    pub params: CanonicalParams,
    tree: OnceLock<KdTree>,
}

impl CanonicalModel {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        category: String,
        template_index: usize,
        template: NunocsCloud,
        template_mesh: TriMesh,
        instance_ids: Vec<String>,
        instance_frames: Vec<NunocsFrame>,
        instance_poses: BTreeMap<String, crate::geom::Pose9D>,
        chamfer_sums: Vec<f64>,
        params: CanonicalParams,
    ) -> Self {
        Self {
            category,
            template_index,
            template,
            template_mesh,
            instance_ids,
            instance_frames,
            instance_poses,
            chamfer_sums,
            params,
            tree: OnceLock::new(),
        }
    }

    pub fn template_tree(&self) -> &KdTree {
        self.tree.get_or_init(|| KdTree::new(&self.template.points))
    }

    pub fn instance_index(&self, id: &str) -> Result<usize> {
        self.instance_ids
            .iter()
            .position(|s| s == id)
            .ok_or_else(|| Error::UnknownInstance(id.to_string()))
    }

    /// Instance mesh frame → template ℂ.
    pub fn instance_to_canonical(&self, id: &str) -> Result<crate::geom::Pose9D> {
        let i = self.instance_index(id)?;
        let reg = self
            .instance_poses
            .get(id)
            .ok_or_else(|| Error::UnknownInstance(id.to_string()))?;
        Ok(reg.compose_axis_aligned(&self.instance_frames[i].from_source()))
    }

    pub fn symmetry(&self) -> Symmetry {
        self.params.symmetry
    }
}

/// Nearest template point in ℂ for every observed point.
pub fn correspond(observed: &NunocsCloud, canon: &CanonicalModel) -> Result<CorrespondenceSet> {
    correspond_points(&observed.points, canon)
}

pub fn correspond_points(observed: &[Vec3], canon: &CanonicalModel) -> Result<CorrespondenceSet> {
    if observed.is_empty() || canon.template.is_empty() {
        return Err(Error::InvalidInput("correspondence needs non-empty clouds".into()));
    }
    let tree = canon.template_tree();
    Ok(CorrespondenceSet {
        pairs: observed
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let (j, d) = tree.nearest(p).expect("non-empty");
                (i, j, d)
            })
            .collect(),
    })
}

/// Iterative nearest-neighbour registration of `points` onto the template
/// tree, starting from identity. Falls back to identity when no refit
/// improves the one-sided Chamfer distance.
fn register(points: &[Vec3], tree: &KdTree, params: &CanonicalParams, seed: u64) -> crate::geom::Pose9D {
    let mut pose = crate::geom::Pose9D::identity();
    let mut best = one_sided_chamfer(points, tree);
    let ransac = RansacParams {
        iterations: 100,
        inlier_threshold: 0.1,
        seed,
        ..Default::default()
    };
    for _ in 0..params.register_iterations {
        if best == 0.0 {
            break;
        }
        let (x, y): (Vec<Vec3>, Vec<Vec3>) = points
            .iter()
            .map(|p| {
                let (j, _) = tree.nearest(&pose.transform_point(p)).expect("non-empty");
                (*p, tree.points()[j])
            })
            .unzip();
        let Ok(cand) = fit_pairs(&x, &y, &ransac) else { break };
        let moved: Vec<Vec3> = points.iter().map(|p| cand.transform_point(p)).collect();
        let score = one_sided_chamfer(&moved, tree);
        if score + 1e-15 >= best {
            break;
        }
        pose = cand;
        best = score;
    }
    pose
}

/// Builds the canonical model with instance ids `"0"`, `"1"`, ….
pub fn build_canonical(models: &[TriMesh], params: &CanonicalParams) -> Result<CanonicalModel> {
    let ids: Vec<String> = (0..models.len()).map(|i| i.to_string()).collect();
    build_canonical_named("default", &ids, models, params)
}

pub fn build_canonical_named(
    category: &str,
    ids: &[String],
    models: &[TriMesh],
    params: &CanonicalParams,
) -> Result<CanonicalModel> {
    if models.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "canonical model needs at least 2 instances, got {}",
            models.len()
        )));
    }
    if ids.len() != models.len() {
        return Err(Error::InvalidInput("one id per model required".into()));
    }
    let mut frames = Vec::with_capacity(models.len());
    let mut clouds = Vec::with_capacity(models.len());
    for (id, m) in ids.iter().zip(models) {
        let frame = NunocsFrame::from_bounds(&m.bounds())
            .map_err(|e| Error::Degenerate(format!("instance {id}: {e}")))?;
        let samples = poisson_disk_sample(m, params.sample_radius, params.seed)?;
        clouds.push(to_nunocs_in(&samples, &frame));
        frames.push(frame);
    }

    let n = models.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = chamfer_distance(&clouds[i].as_cloud(), &clouds[j].as_cloud())?;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let sums: Vec<f64> = dist.iter().map(|row| row.iter().sum()).collect();
    let mut template_index = 0;
    for (i, s) in sums.iter().enumerate() {
        if *s < sums[template_index] {
            template_index = i;
        }
    }

    let template = clouds[template_index].clone();
    let tree = KdTree::new(&template.points);
    let mut instance_poses = BTreeMap::new();
    for (i, id) in ids.iter().enumerate() {
        let pose = if i == template_index {
            crate::geom::Pose9D::identity()
        } else {
            register(&clouds[i].points, &tree, params, crate::seed::split_index(params.seed, i as u64))
        };
        instance_poses.insert(id.clone(), pose);
    }
    let template_mesh = models[template_index].transformed9(&frames[template_index].from_source());

    Ok(CanonicalModel {
        category: category.to_string(),
        template_index,
        template,
        template_mesh,
        instance_ids: ids.to_vec(),
        instance_frames: frames,
        instance_poses,
        chamfer_sums: sums,
        params: *params,
        tree: OnceLock::from(tree),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes;

    fn params() -> CanonicalParams {
        CanonicalParams {
            sample_radius: 0.08,
            ..Default::default()
        }
    }

    #[test]
    fn identical_meshes_pick_first_with_zero_distance() {
        let m = shapes::icosphere(1.0, 2);
        let c = build_canonical(&[m.clone(), m.clone(), m], &params()).unwrap();
        assert_eq!(c.template_index, 0);
        assert!(c.chamfer_sums.iter().all(|&s| s == 0.0));
        for p in c.instance_poses.values() {
            assert_eq!(*p, crate::geom::Pose9D::identity());
        }
    }

    #[test]
    fn sphere_wins_over_cube() {
        let s = shapes::icosphere(1.0, 2);
        let cube = shapes::cuboid(Vec3::repeat(2.0));
        let c = build_canonical(&[s.clone(), s, cube], &params()).unwrap();
        assert!(c.template_index < 2);
        assert!(c.chamfer_sums[2] > c.chamfer_sums[0]);
    }

    #[test]
    fn single_model_is_rejected() {
        assert!(build_canonical(&[shapes::icosphere(1.0, 1)], &params()).is_err());
    }

    #[test]
    fn correspond_identity_and_stretch_invariance() {
        let base = shapes::cuboid(Vec3::new(1.0, 0.6, 0.4));
        let c = build_canonical(&[base.clone(), base.clone()], &params()).unwrap();
        let corr = correspond(&c.template, &c).unwrap();
        for (i, (a, b, d)) in corr.pairs.iter().enumerate() {
            assert_eq!((*a, *b, *d), (i, i, 0.0));
        }

        let cloud = poisson_disk_sample(&base, 0.05, 3).unwrap();
        let frame = NunocsFrame::from_bounds(&base.bounds()).unwrap();
        let stretched = base.scaled(&Vec3::new(3.0, 1.0, 1.0));
        let s_cloud = crate::geom::PointCloud::new(cloud.points.iter().map(|p| p.component_mul(&Vec3::new(3.0, 1.0, 1.0))).collect());
        let s_frame = NunocsFrame::from_bounds(&stretched.bounds()).unwrap();
        let a = correspond(&to_nunocs_in(&cloud, &frame), &c).unwrap();
        let b = correspond(&to_nunocs_in(&s_cloud, &s_frame), &c).unwrap();
        assert_eq!(a.template_indices(), b.template_indices());
    }
}
