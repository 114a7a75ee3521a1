//! Analytic stand-in for a learned observed-cloud → ℂ predictor: coarse
//! search over a rotation grid with robust per-axis scale, then
//! nearest-neighbour refinement with robust 9D refits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::canonical::CanonicalModel;
use super::fit::{fit_pairs, RansacParams, ScaleModel};
use crate::geom::distance::one_sided_chamfer;
use crate::geom::{rotation_about, rotation_between, KdTree, Mat3, PointCloud, Pose9D, Vec3};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignParams {
    /// Approach directions in the rotation grid.
    pub grid_directions: usize,
    /// In-plane rotations per direction.
    pub grid_inplane: usize,
    /// Observed points scored per coarse hypothesis.
    pub coarse_points: usize,
    /// Coarse hypotheses carried into refinement.
    pub top_k: usize,
    /// Refined hypotheses differ pairwise by at least this rotation angle,
    /// modulo the category symmetry, degrees. 0 refines the plain top k.
    pub distinct_deg: f64,
    pub refine_iterations: usize,
    pub refine_ransac_iterations: usize,
    /// Inlier threshold of each refit as a fraction of the segment's
    /// bounding-box diagonal.
    pub refine_threshold: f64,
    /// Largest accepted one-sided Chamfer (observed → template) in ℂ.
    pub acceptance_bound: f64,
    /// The segment, mapped into ℂ, must span at least this fraction of the
    /// unit cube along two or more axes. Rejects fits that explain the
    /// segment with a small part of the template.
    pub min_coverage: f64,
    /// Lower percentile used for robust extents; the upper one is `1 − p`.
    pub robust_percentile: f64,
    /// Weight of the visibility term: template points facing the camera
    /// (at the origin) should lie near observed points. 0 disables it.
    pub visibility_weight: f64,
    /// Template points scored by the visibility term.
    pub visibility_points: usize,
    /// Adds rotations mapping each ℂ axis onto the segment's principal
    /// direction; accurate starts for elongated parts that the coarse grid
    /// misses.
    pub axis_hypotheses: bool,
    pub scale_model: ScaleModel,
    pub seed: u64,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            grid_directions: 24,
            grid_inplane: 24,
            coarse_points: 256,
            top_k: 4,
            distinct_deg: 30.0,
            refine_iterations: 20,
            refine_ransac_iterations: 100,
            refine_threshold: 0.1,
            acceptance_bound: 0.05,
            min_coverage: 0.5,
            robust_percentile: 0.01,
            visibility_weight: 1.0,
            visibility_points: 512,
            axis_hypotheses: true,
            scale_model: ScaleModel::PerAxis,
            seed: 0,
        }
    }
}

/// Observed points expressed in ℂ together with ξ_o (ℂ → camera).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NunocsPrediction {
    /// ℂ coordinates of the observed points, clamped to the unit cube.
    pub points: Vec<Vec3>,
    pub pose: Pose9D,
    /// One-sided Chamfer from observed points to the template, in ℂ.
    pub score: f64,
}

/// Fibonacci-sphere directions, rotated so the first is +z.
fn directions(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let raw: Vec<Vec3> = (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect();
    let align = rotation_between(&raw[0], &Vec3::z());
    raw.iter().map(|d| align * d).collect()
}

/// Rotation grid; element 0 is the identity.
pub fn rotation_grid(n_dir: usize, n_inplane: usize) -> Vec<Mat3> {
    let mut out = Vec::with_capacity(n_dir * n_inplane);
    for d in directions(n_dir.max(1)) {
        let base = rotation_between(&Vec3::z(), &d);
        for k in 0..n_inplane.max(1) {
            let a = std::f64::consts::TAU * k as f64 / n_inplane.max(1) as f64;
            out.push(base * rotation_about(&Vec3::z(), a));
        }
    }
    out
}

fn percentile_range(values: &mut [f64], p: f64) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let at = |q: f64| values[((q * (n - 1) as f64).round() as usize).min(n - 1)];
    (at(p), at(1.0 - p))
}

fn robust_ranges(points: &[Vec3], p: f64) -> [(f64, f64); 3] {
    let mut out = [(0.0, 0.0); 3];
    for (d, slot) in out.iter_mut().enumerate() {
        let mut v: Vec<f64> = points.iter().map(|q| q[d]).collect();
        *slot = percentile_range(&mut v, p);
    }
    out
}

fn evenly_spaced(n: usize, k: usize) -> Vec<usize> {
    if n <= k {
        return (0..n).collect();
    }
    (0..k).map(|i| i * n / k).collect()
}

/// Consecutive non-improving refinement steps tolerated.
const REFINE_PATIENCE: usize = 3;

/// Rotations taking each ℂ axis (either sign) onto `dir`, each spun about
/// `dir` in `n_spin` steps.
fn axis_hypotheses(dir: &Vec3, n_spin: usize) -> Vec<Mat3> {
    let mut out = Vec::with_capacity(6 * n_spin);
    for k in 0..3 {
        for sign in [1.0, -1.0] {
            let mut e = Vec3::zeros();
            e[k] = sign;
            let base = rotation_between(&e, dir);
            for j in 0..n_spin {
                out.push(rotation_about(dir, std::f64::consts::TAU * j as f64 / n_spin as f64) * base);
            }
        }
    }
    out
}

/// Unit eigenvector of the largest covariance eigenvalue.
fn principal_axis(points: &[Vec3]) -> Vec3 {
    let c = points.iter().sum::<Vec3>() / points.len() as f64;
    let cov = points.iter().fold(Mat3::zeros(), |acc, p| acc + (p - c) * (p - c).transpose());
    let eig = cov.symmetric_eigen();
    eig.eigenvectors.column(eig.eigenvalues.imax()).into_owned()
}

struct Ctx<'a> {
    observed: &'a [Vec3],
    tree: &'a KdTree,
    obs_tree: KdTree,
    /// Observed points as unit viewing rays, for occlusion tests.
    ray_tree: KdTree,
    /// Angular radius within which an observed ray covers a template
    /// point's ray.
    ray_tol: f64,
    tmpl_normals: Option<&'a [Vec3]>,
    tmpl_sample: Vec<usize>,
    /// Unit direction from the camera to the segment centroid.
    view: Vec3,
    tmpl_ranges: [(f64, f64); 3],
    diameter: f64,
    params: &'a AlignParams,
}

impl Ctx<'_> {
    /// One-sided Chamfer in ℂ (the reported score).
    fn score(&self, pose: &Pose9D) -> f64 {
        let pts: Vec<Vec3> = self.observed.iter().map(|o| pose.inverse_transform_point(o)).collect();
        one_sided_chamfer(&pts, self.tree)
    }

    fn covers(&self, pose: &Pose9D) -> bool {
        let b = crate::geom::Aabb::from_points(
            &self.observed.iter().map(|o| pose.inverse_transform_point(o)).collect::<Vec<_>>(),
        );
        b.extents().iter().filter(|&&e| e >= self.params.min_coverage).count() >= 2
    }

    /// Mean camera-frame distance from observed points to their ℂ-nearest
    /// template points, as a fraction of the segment diagonal, plus the
    /// weighted visibility term. Used to rank hypotheses: unlike the ℂ score
    /// it cannot be lowered by inflating the scale until the segment
    /// collapses onto a patch of the template, and the visibility term
    /// penalises templates squashed onto the visible side or flipped end to
    /// end.
    fn fit_error(&self, pose: &Pose9D, idx: Option<&[usize]>) -> f64 {
        let one = |o: &Vec3| {
            let (j, _) = self.tree.nearest(&pose.inverse_transform_point(o)).expect("non-empty");
            (pose.transform_point(&self.tree.points()[j]) - o).norm()
        };
        let (sum, n) = match idx {
            Some(ix) => (ix.iter().map(|&i| one(&self.observed[i])).sum::<f64>(), ix.len()),
            None => (self.observed.iter().map(one).sum::<f64>(), self.observed.len()),
        };
        sum / n as f64 / self.diameter + self.params.visibility_weight * self.visibility_error(pose)
    }

    /// Mean distance from camera-facing template points to the observed
    /// segment, capped at half the segment diagonal so occluded template
    /// parts cost a bounded amount. Fraction of the diagonal.
    fn visibility_error(&self, pose: &Pose9D) -> f64 {
        let Some(normals) = self.tmpl_normals else { return 0.0 };
        if self.params.visibility_weight == 0.0 {
            return 0.0;
        }
        let cap = 0.5 * self.diameter;
        let (mut sum, mut n) = (0.0, 0usize);
        for &j in &self.tmpl_sample {
            if pose.transform_normal(&normals[j]).dot(&self.view) >= 0.0 {
                continue;
            }
            let p = pose.transform_point(&self.tree.points()[j]);
            if self.occluded(&p) {
                continue;
            }
            sum += self.obs_tree.nearest(&p).expect("non-empty").1.min(cap);
            n += 1;
        }
        if n == 0 {
            return 0.5;
        }
        sum / n as f64 / self.diameter
    }

    /// Whether an observed point on (nearly) the same camera ray lies
    /// clearly in front of `p`, hiding it.
    fn occluded(&self, p: &Vec3) -> bool {
        let depth = p.norm();
        let Some(ray) = p.try_normalize(1e-12) else { return false };
        let margin = OCCLUSION_MARGIN * self.diameter;
        self.ray_tree
            .within(&ray, self.ray_tol)
            .into_iter()
            .any(|i| self.observed[i].norm() < depth - margin)
    }

    /// Scale and offset from robust extents with the rotation fixed. The
    /// extent along the template axis closest to the viewing direction is
    /// clipped by self-occlusion, so a second hypothesis takes that axis's
    /// scale from the other two and aligns the template's near side with
    /// the observed one.
    fn hypotheses(&self, r: &Mat3) -> [Pose9D; 2] {
        let local: Vec<Vec3> = self.observed.iter().map(|o| r.transpose() * o).collect();
        let obs = robust_ranges(&local, self.params.robust_percentile);
        let mut s = Vec3::zeros();
        let mut u = Vec3::zeros();
        for d in 0..3 {
            let (a, b) = obs[d];
            let (ta, tb) = self.tmpl_ranges[d];
            s[d] = ((b - a) / (tb - ta).max(1e-9)).max(1e-9);
            u[d] = 0.5 * (a + b) - s[d] * 0.5 * (ta + tb);
        }
        let v = r.transpose() * self.view;
        let depth = v.iamax();
        let (e1, e2) = ((depth + 1) % 3, (depth + 2) % 3);
        let mut s2 = s;
        let mut u2 = u;
        s2[depth] = s[depth].max(0.5 * (s[e1] + s[e2]));
        let (a, b) = obs[depth];
        let (ta, tb) = self.tmpl_ranges[depth];
        u2[depth] = if v[depth] > 0.0 { a - s2[depth] * ta } else { b - s2[depth] * tb };
        [(s, u), (s2, u2)].map(|(mut s, mut u)| {
            if self.params.scale_model == ScaleModel::Uniform {
                let mid = u + s.component_mul(&self.tmpl_mid());
                s = Vec3::repeat((s.x * s.y * s.z).cbrt());
                u = mid - s.component_mul(&self.tmpl_mid());
            }
            Pose9D::new(*r, r * u, s)
        })
    }

    fn tmpl_mid(&self) -> Vec3 {
        Vec3::from_fn(|d, _| 0.5 * (self.tmpl_ranges[d].0 + self.tmpl_ranges[d].1))
    }

    fn refine(&self, start: Pose9D, seed: u64) -> (Pose9D, f64) {
        let ransac = RansacParams {
            iterations: self.params.refine_ransac_iterations,
            inlier_threshold: self.params.refine_threshold * self.diameter,
            min_inliers: None,
            seed,
            scale_model: self.params.scale_model,
        };
        let mut pose = start;
        let mut best = (start, self.fit_error(&start, None));
        let mut stale = 0;
        for it in 0..self.params.refine_iterations {
            let (x, y): (Vec<Vec3>, Vec<Vec3>) = self
                .observed
                .iter()
                .map(|o| {
                    let (j, _) = self.tree.nearest(&pose.inverse_transform_point(o)).expect("non-empty");
                    (self.tree.points()[j], *o)
                })
                .unzip();
            let params = RansacParams {
                seed: crate::seed::split_index(seed, it as u64),
                ..ransac
            };
            let Ok(cand) = fit_pairs(&x, &y, &params) else { break };
            let score = self.fit_error(&cand, None);
            // Correspondences are re-paired from the latest fit even when it
            // is worse, which lets a slightly misaligned start slide into
            // its basin; the best pose seen is returned.
            pose = cand;
            if score < best.1 {
                best = (cand, score);
                stale = 0;
            } else {
                stale += 1;
                if stale >= REFINE_PATIENCE {
                    break;
                }
            }
        }
        best
    }
}

/// Aligns the canonical template to an observed single-instance segment
/// given in the camera frame (camera at the origin). Returns ξ_o
/// (ℂ → camera) and the observed points mapped into ℂ.
/// Occluders must be this much nearer than the hidden point, as a fraction
/// of the segment diagonal.
const OCCLUSION_MARGIN: f64 = 0.05;
/// Occlusion ray tolerance in units of the typical angular point spacing.
const RAY_TOL_SPACINGS: f64 = 1.5;

/// Median angular distance from a ray to its nearest neighbour, over an
/// evenly spaced subset.
fn ray_spacing(rays: &[Vec3], tree: &KdTree) -> f64 {
    let spread = crate::geom::Aabb::from_points(rays).diagonal().max(1e-9);
    let mut d: Vec<f64> = evenly_spaced(rays.len(), 64)
        .into_iter()
        .filter_map(|i| {
            let mut r = spread / rays.len() as f64;
            while r <= spread {
                let near = tree
                    .within(&rays[i], r)
                    .into_iter()
                    .filter(|&j| j != i)
                    .map(|j| (rays[j] - rays[i]).norm())
                    .fold(f64::INFINITY, f64::min);
                if near.is_finite() {
                    return Some(near);
                }
                r *= 2.0;
            }
            None
        })
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    *d.select_nth_unstable_by(mid, f64::total_cmp).1
}

/// The first `k` hypotheses (in ranking order) whose rotations differ from
/// every earlier pick by more than `min_deg` under all symmetries; the
/// near-duplicates of a wrong basin otherwise crowd out the right one.
fn distinct(ranked: &[(f64, usize, Pose9D)], k: usize, min_deg: f64, symmetries: &[Mat3]) -> Vec<(f64, usize, Pose9D)> {
    // trace(R) = 1 + 2 cos θ
    let max_trace = 1.0 + 2.0 * min_deg.to_radians().cos();
    let mut picked: Vec<(f64, usize, Pose9D)> = Vec::with_capacity(k);
    for h in ranked {
        if picked.len() == k {
            break;
        }
        let close = picked.iter().any(|p| {
            symmetries
                .iter()
                .any(|s| (h.2.rotation.transpose() * p.2.rotation * s).trace() > max_trace)
        });
        if !close {
            picked.push(*h);
        }
    }
    picked
}

/// The cost [`predict_nunocs`] ranks hypotheses by, for a given ℂ → camera
/// pose of a camera-frame segment. Lower is better.
pub fn alignment_cost(observed_segment: &PointCloud, canon: &CanonicalModel, params: &AlignParams, pose: &Pose9D) -> Result<f64> {
    Ok(context(&observed_segment.points, canon, params)?.fit_error(pose, None))
}

fn context<'a>(observed: &'a [Vec3], canon: &'a CanonicalModel, params: &'a AlignParams) -> Result<Ctx<'a>> {
    if observed.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "segment has {} points; at least 4 needed",
            observed.len()
        )));
    }
    let centroid = observed.iter().sum::<Vec3>() / observed.len() as f64;
    let rays: Vec<Vec3> = observed.iter().map(|o| o.try_normalize(1e-12).unwrap_or_else(Vec3::z)).collect();
    let ray_tree = KdTree::new(&rays);
    let ray_tol = RAY_TOL_SPACINGS * ray_spacing(&rays, &ray_tree);
    Ok(Ctx {
        ray_tree,
        ray_tol,
        observed,
        tree: canon.template_tree(),
        obs_tree: KdTree::new(observed),
        tmpl_normals: canon.template.normals.as_deref(),
        tmpl_sample: evenly_spaced(canon.template.len(), params.visibility_points),
        view: centroid.try_normalize(1e-12).unwrap_or_else(Vec3::z),
        tmpl_ranges: robust_ranges(&canon.template.points, params.robust_percentile),
        diameter: crate::geom::Aabb::from_points(observed).diagonal().max(f64::MIN_POSITIVE),
        params,
    })
}

pub fn predict_nunocs(
    observed_segment: &PointCloud,
    canon: &CanonicalModel,
    params: &AlignParams,
) -> Result<NunocsPrediction> {
    let observed = &observed_segment.points;
    let ctx = context(observed, canon, params)?;
    let mut grid = rotation_grid(params.grid_directions, params.grid_inplane);
    if params.axis_hypotheses {
        grid.extend(axis_hypotheses(&principal_axis(observed), params.grid_inplane.max(1)));
    }
    let coarse_idx = evenly_spaced(observed.len(), params.coarse_points);
    let mut coarse: Vec<(f64, usize, Pose9D)> = grid
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, r)| {
            let hs = ctx.hypotheses(r);
            let ctx = &ctx;
            let coarse_idx = &coarse_idx;
            hs.into_iter()
                .enumerate()
                .map(move |(v, h)| (ctx.fit_error(&h, Some(coarse_idx)), 2 * i + v, h))
        })
        .collect();
    coarse.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let refined: Vec<(bool, f64, usize, Pose9D)> = distinct(&coarse, params.top_k.max(1), params.distinct_deg, &canon.symmetry().rotations())
        .par_iter()
        .map(|(_, i, h)| {
            let (p, s) = ctx.refine(*h, crate::seed::split_index(params.seed, *i as u64));
            (!ctx.covers(&p), s, *i, p)
        })
        .collect();
    let (uncovered, _, _, pose) = refined
        .into_iter()
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)))
        .expect("at least one hypothesis");
    let score = ctx.score(&pose);
    if uncovered {
        return Err(Error::PredictionFailure {
            score: f64::INFINITY,
            bound: params.acceptance_bound,
        });
    }

    if !(score <= params.acceptance_bound) {
        return Err(Error::PredictionFailure {
            score,
            bound: params.acceptance_bound,
        });
    }
    let points = observed
        .iter()
        .map(|o| pose.inverse_transform_point(o).map(|v| v.clamp(0.0, 1.0)))
        .collect();
    Ok(NunocsPrediction { points, pose, score })
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::geom::{shapes, transform_cloud, TriMesh};
    use crate::nunocs::{build_canonical, CanonicalParams};

    /// Block with two knobs on different faces: no rotational symmetry.
    fn asymmetric_part() -> TriMesh {
        let body = shapes::cuboid_between(Vec3::zeros(), Vec3::new(0.06, 0.03, 0.02));
        let knob = shapes::cuboid_between(Vec3::new(0.0, 0.0, 0.02), Vec3::new(0.015, 0.015, 0.035));
        let tab = shapes::cuboid_between(Vec3::new(0.06, 0.01, 0.0), Vec3::new(0.075, 0.02, 0.01));
        TriMesh::merged(&[&body, &knob, &tab])
    }

    fn canon() -> CanonicalModel {
        let m = asymmetric_part();
        build_canonical(&[m.clone(), m], &CanonicalParams { sample_radius: 0.002, ..Default::default() }).unwrap()
    }

    #[test]
    fn full_cloud_at_known_pose() {
        let c = canon();
        let truth = Pose9D::new(
            rotation_about(&Vec3::new(0.3, -0.5, 1.0), 2.0),
            Vec3::new(0.05, -0.02, 0.5),
            c.template.source_extents.component_mul(&Vec3::new(1.0, 1.4, 0.8)),
        );
        let observed = transform_cloud(&c.template.as_cloud(), &truth);
        let pred = predict_nunocs(&observed, &c, &AlignParams::default()).unwrap();
        assert!((pred.pose.rotation - truth.rotation).norm() < 1e-3, "{}", pred.pose.rotation - truth.rotation);
        assert!((pred.pose.translation - truth.translation).norm() < 1e-3);
        assert!(pred.score < 1e-6);
    }

    #[test]
    fn half_view_at_identity() {
        let c = canon();
        // Template in front of a camera at the origin, axes unrotated.
        let src = c.template.frame().to_source();
        let frame = Pose9D::new(Mat3::identity(), src.translation + Vec3::new(-0.03, 0.02, 0.4), src.scale);
        let visible: Vec<usize> = (0..c.template.len())
            .filter(|&i| {
                let p = frame.transform_point(&c.template.points[i]);
                frame.transform_normal(&c.template.normals.as_ref().unwrap()[i]).dot(&p) < 0.0
            })
            .collect();
        let observed = transform_cloud(&c.template.as_cloud().select(&visible), &frame);
        let pred = predict_nunocs(&observed, &c, &AlignParams::default()).unwrap();
        assert!((pred.pose.rotation - Mat3::identity()).norm() < 0.05, "{}", pred.pose.rotation);
        assert!((pred.pose.scale - frame.scale).norm() < 0.05 * frame.scale.norm());
        assert!((pred.pose.translation - frame.translation).norm() < 0.002);
    }

    #[test]
    fn other_category_is_rejected() {
        let screw = shapes::screw(&shapes::ScrewDims::default(), 32);
        let c = build_canonical(&[screw.clone(), screw], &CanonicalParams { sample_radius: 0.001, ..Default::default() }).unwrap();
        let sphere = shapes::icosphere(0.01, 3);
        let obs = crate::geom::poisson_disk_sample(&sphere, 0.001, 1).unwrap();
        let r = predict_nunocs(&obs, &c, &AlignParams::default());
        assert!(matches!(r, Err(Error::PredictionFailure { .. })), "{r:?}");
    }

    #[test]
    fn grid_is_576_rotations_starting_at_identity() {
        let g = rotation_grid(24, 24);
        assert_eq!(g.len(), 576);
        assert!((g[0] - Mat3::identity()).norm() < 1e-12);
        assert!(g.iter().all(crate::geom::is_rotation));
    }
}
