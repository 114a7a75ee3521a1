//! Robust 9D (rotation, translation, per-axis scale) alignment from point
//! correspondences.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CorrespondenceSet;
use crate::geom::{orthonormalize, Mat3, PointCloud, Pose9D, Vec3};
use crate::{Error, Result};

/// Whether the fitted scale may differ per axis (the normalised object
/// space) or is a single scalar (the uniform-scale baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleModel {
    #[default]
    PerAxis,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacParams {
    pub iterations: usize,
    /// Inlier residual bound, in the destination cloud's units.
    pub inlier_threshold: f64,
    /// `None` means `max(10, ⌈25 %⌉)` of the correspondences, capped at
    /// their count.
    pub min_inliers: Option<usize>,
    pub seed: u64,
    pub scale_model: ScaleModel,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 2000,
            inlier_threshold: 0.01,
            min_inliers: None,
            seed: 0,
            scale_model: ScaleModel::PerAxis,
        }
    }
}

impl RansacParams {
    pub fn required_inliers(&self, n: usize) -> usize {
        self.min_inliers
            .unwrap_or_else(|| 10.max((n as f64 * 0.25).ceil() as usize))
            .min(n)
    }
}

/// Rounds of alternating scale / rotation refinement.
pub const ALTERNATIONS: usize = 5;
const SAMPLE_SIZE: usize = 4;
const CHUNK: usize = 128;
const MAX_REFITS: usize = 10;

/// Kabsch: rotation maximising `Σ ⟨y_i, R x_i⟩` over centred pairs.
fn kabsch(x: &[Vec3], y: &[Vec3]) -> Mat3 {
    let mut h = Mat3::zeros();
    for (a, b) in x.iter().zip(y) {
        h += b * a.transpose();
    }
    orthonormalize(&h)
}

fn centred(pts: &[Vec3]) -> (Vec3, Vec<Vec3>) {
    let c = pts.iter().sum::<Vec3>() / pts.len() as f64;
    (c, pts.iter().map(|p| p - c).collect())
}

/// Sum of squared residuals of `pose` on the given pairs.
pub fn residual(pose: &Pose9D, x: &[Vec3], y: &[Vec3]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (pose.transform_point(a) - b).norm_squared())
        .sum()
}

fn min_scale(x: &[Vec3]) -> f64 {
    let spread = x.iter().map(|p| p.amax()).fold(0.0, f64::max);
    1e-9 * spread.max(1e-300)
}

/// Closed-form anisotropic alignment `y ≈ R·diag(s)·x + t`.
///
/// Starts from the least-squares affine map (scale = its column norms,
/// rotation = nearest rotation to the scale-normalised matrix), then runs
/// [`ALTERNATIONS`] rounds of exact block-coordinate descent: scale given
/// rotation, then rotation given scale. Each round cannot increase the
/// residual. Returns the residual after each round when `trace` is set.
pub fn fit_per_axis(x: &[Vec3], y: &[Vec3], trace: Option<&mut Vec<f64>>) -> Pose9D {
    let (cx, xt) = centred(x);
    let (cy, yt) = centred(y);
    let floor = min_scale(&xt);

    let mut sxx = Mat3::zeros();
    let mut syx = Mat3::zeros();
    for (a, b) in xt.iter().zip(&yt) {
        sxx += a * a.transpose();
        syx += b * a.transpose();
    }
    let (mut r, mut s) = match sxx.try_inverse().filter(|_| sxx.determinant().abs() > 1e-300) {
        Some(inv) => {
            let a = syx * inv;
            let s = Vec3::from_fn(|d, _| a.column(d).norm().max(floor));
            (orthonormalize(&(a * Mat3::from_diagonal(&s.map(|v| 1.0 / v)))), s)
        }
        None => {
            let r = kabsch(&xt, &yt);
            (r, Vec3::repeat(1.0))
        }
    };

    let pose_of = |r: &Mat3, s: &Vec3| Pose9D::new(*r, cy - r * s.component_mul(&cx), *s);
    let mut trace = trace;
    let mut best = pose_of(&r, &s);
    let mut best_res = residual(&best, x, y);
    for _ in 0..ALTERNATIONS {
        // scale given rotation: independent 1-D least squares per axis
        let mut num = Vec3::zeros();
        let mut den = Vec3::zeros();
        for (a, b) in xt.iter().zip(&yt) {
            let z = r.transpose() * b;
            num += a.component_mul(&z);
            den += a.component_mul(a);
        }
        s = Vec3::from_fn(|d, _| if den[d] > 0.0 { (num[d] / den[d]).max(floor) } else { s[d] });
        // rotation given scale
        let scaled: Vec<Vec3> = xt.iter().map(|a| a.component_mul(&s)).collect();
        r = kabsch(&scaled, &yt);
        let cand = pose_of(&r, &s);
        let res = residual(&cand, x, y);
        if res <= best_res {
            best = cand;
            best_res = res;
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(best_res);
        }
    }
    best
}

/// Umeyama similarity: rotation, translation and one scalar scale.
pub fn fit_uniform(x: &[Vec3], y: &[Vec3]) -> Pose9D {
    let (cx, xt) = centred(x);
    let (cy, yt) = centred(y);
    let r = kabsch(&xt, &yt);
    let var: f64 = xt.iter().map(|a| a.norm_squared()).sum();
    let cov: f64 = xt.iter().zip(&yt).map(|(a, b)| b.dot(&(r * a))).sum();
    let s = if var > 0.0 { (cov / var).max(min_scale(&xt)) } else { 1.0 };
    let sv = Vec3::repeat(s);
    Pose9D::new(r, cy - r * sv.component_mul(&cx), sv)
}

fn fit_model(model: ScaleModel, x: &[Vec3], y: &[Vec3]) -> Pose9D {
    match model {
        ScaleModel::PerAxis => fit_per_axis(x, y, None),
        ScaleModel::Uniform => fit_uniform(x, y),
    }
}

struct Score {
    inliers: usize,
    residual: f64,
}

fn score(pose: &Pose9D, x: &[Vec3], y: &[Vec3], thr2: f64) -> Score {
    let mut s = Score { inliers: 0, residual: 0.0 };
    for (a, b) in x.iter().zip(y) {
        let e = (pose.transform_point(a) - b).norm_squared();
        if e <= thr2 {
            s.inliers += 1;
            s.residual += e;
        }
    }
    s
}

fn better(a: &Score, b: &Score) -> bool {
    a.inliers > b.inliers || (a.inliers == b.inliers && a.residual < b.residual)
}

fn inlier_mask(pose: &Pose9D, x: &[Vec3], y: &[Vec3], thr2: f64) -> Vec<bool> {
    x.iter()
        .zip(y)
        .map(|(a, b)| (pose.transform_point(a) - b).norm_squared() <= thr2)
        .collect()
}

/// RANSAC over minimal 4-point samples, then repeated refits on the inlier
/// set until it stops changing. Maps `src` onto `dst`: each pair `(i, j)`
/// of `corr` asks for `dst[j] ≈ P(src[i])`.
pub fn fit_pose9d(
    src: &PointCloud,
    dst: &PointCloud,
    corr: &CorrespondenceSet,
    params: &RansacParams,
) -> Result<Pose9D> {
    let n = corr.pairs.len();
    if n < SAMPLE_SIZE {
        return Err(Error::InvalidInput(format!(
            "{n} correspondences; at least {SAMPLE_SIZE} needed"
        )));
    }
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for &(i, j, _) in &corr.pairs {
        let (Some(a), Some(b)) = (src.points.get(i), dst.points.get(j)) else {
            return Err(Error::InvalidInput(format!("correspondence ({i}, {j}) out of range")));
        };
        x.push(*a);
        y.push(*b);
    }
    fit_pairs(&x, &y, params)
}

/// [`fit_pose9d`] on already paired points.
pub fn fit_pairs(x: &[Vec3], y: &[Vec3], params: &RansacParams) -> Result<Pose9D> {
    let n = x.len();
    if n < SAMPLE_SIZE || y.len() != n {
        return Err(Error::InvalidInput(format!(
            "{n} correspondences; at least {SAMPLE_SIZE} needed"
        )));
    }
    let required = params.required_inliers(n);
    let thr2 = params.inlier_threshold * params.inlier_threshold;
    let mut rng = crate::seed::rng(params.seed);

    let mut best: Option<(Pose9D, Score)> = None;
    let mut done = 0;
    while done < params.iterations {
        let m = CHUNK.min(params.iterations - done);
        let samples: Vec<Vec<usize>> = (0..m).map(|_| sample(&mut rng, n, SAMPLE_SIZE).into_vec()).collect();
        let results: Vec<(Pose9D, Score)> = samples
            .par_iter()
            .map(|idx| {
                let xs: Vec<Vec3> = idx.iter().map(|&i| x[i]).collect();
                let ys: Vec<Vec3> = idx.iter().map(|&i| y[i]).collect();
                let pose = fit_model(params.scale_model, &xs, &ys);
                let s = score(&pose, x, y, thr2);
                (pose, s)
            })
            .collect();
        for (pose, s) in results {
            if !pose.is_valid() {
                continue;
            }
            if best.as_ref().is_none_or(|(_, b)| better(&s, b)) {
                best = Some((pose, s));
            }
        }
        done += m;
        if best.as_ref().is_some_and(|(_, b)| b.inliers == n) {
            break;
        }
    }
    let Some((mut pose, s)) = best else {
        return Err(Error::FitFailure { best: 0, required });
    };
    if s.inliers < required.max(SAMPLE_SIZE) {
        return Err(Error::FitFailure { best: s.inliers, required });
    }

    let mut mask = inlier_mask(&pose, x, y, thr2);
    for _ in 0..MAX_REFITS {
        let (xs, ys): (Vec<Vec3>, Vec<Vec3>) = x
            .iter()
            .zip(y)
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|((a, b), _)| (*a, *b))
            .unzip();
        if xs.len() < SAMPLE_SIZE {
            break;
        }
        let cand = fit_model(params.scale_model, &xs, &ys);
        let new_mask = inlier_mask(&cand, x, y, thr2);
        let count = new_mask.iter().filter(|&&m| m).count();
        if !cand.is_valid() || count < required {
            break;
        }
        pose = cand;
        if new_mask == mask {
            break;
        }
        mask = new_mask;
    }
    Ok(pose)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rotation_about;
    use rand::Rng;

    fn random_pose(rng: &mut impl Rng) -> Pose9D {
        let axis = Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        Pose9D::new(
            rotation_about(&axis, rng.random::<f64>() * 3.0),
            Vec3::new(rng.random(), rng.random(), rng.random()),
            Vec3::new(1.5, 0.7, 2.0),
        )
    }

    fn identity_corr(n: usize) -> CorrespondenceSet {
        CorrespondenceSet {
            pairs: (0..n).map(|i| (i, i, 0.0)).collect(),
        }
    }

    #[test]
    fn exact_recovery_and_monotone_residual() {
        let mut rng = crate::seed::rng(2);
        let src = PointCloud::new((0..50).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect());
        let p = random_pose(&mut rng);
        let dst = crate::geom::transform_cloud(&src, &p);
        let fit = fit_pose9d(&src, &dst, &identity_corr(50), &RansacParams::default()).unwrap();
        assert!((fit.rotation - p.rotation).norm() < 1e-6);
        assert!((fit.translation - p.translation).norm() < 1e-6);
        assert!((fit.scale - p.scale).norm() < 1e-6);

        // noisy data: residual trace never increases
        let noisy: Vec<Vec3> = dst
            .points
            .iter()
            .map(|q| q + Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, 0.0) * 0.05)
            .collect();
        let mut trace = Vec::new();
        fit_per_axis(&src.points, &noisy, Some(&mut trace));
        assert_eq!(trace.len(), ALTERNATIONS);
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn identity_data_gives_identity() {
        let mut rng = crate::seed::rng(8);
        let src = PointCloud::new((0..20).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect());
        let fit = fit_pose9d(&src, &src, &identity_corr(20), &RansacParams::default()).unwrap();
        assert!((fit.rotation - Mat3::identity()).norm() < 1e-9);
        assert!(fit.translation.norm() < 1e-9);
        assert!((fit.scale - Vec3::repeat(1.0)).norm() < 1e-9);
    }

    #[test]
    fn tolerates_thirty_percent_outliers() {
        let mut rng = crate::seed::rng(4);
        let src = PointCloud::new((0..100).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect());
        let p = random_pose(&mut rng);
        let mut dst = crate::geom::transform_cloud(&src, &p);
        for q in dst.points.iter_mut().take(30) {
            *q = Vec3::new(rng.random(), rng.random(), rng.random()) * 3.0;
        }
        let fit = fit_pose9d(&src, &dst, &identity_corr(100), &RansacParams::default()).unwrap();
        assert!((fit.rotation - p.rotation).norm() < 1e-3);
        assert!((fit.scale - p.scale).norm() < 1e-3);
    }

    #[test]
    fn too_few_supporters_is_a_fit_failure() {
        let mut rng = crate::seed::rng(6);
        let src = PointCloud::new((0..40).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect());
        let dst = PointCloud::new((0..40).map(|_| Vec3::new(rng.random(), rng.random(), rng.random()) * 10.0).collect());
        let params = RansacParams { iterations: 200, inlier_threshold: 1e-4, ..Default::default() };
        assert!(matches!(
            fit_pose9d(&src, &dst, &identity_corr(40), &params),
            Err(Error::FitFailure { .. })
        ));
    }

    #[test]
    fn uniform_model_recovers_similarity() {
        let mut rng = crate::seed::rng(10);
        let src: Vec<Vec3> = (0..30).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
        let p = Pose9D::new(rotation_about(&Vec3::y(), 0.7), Vec3::x(), Vec3::repeat(2.5));
        let dst: Vec<Vec3> = src.iter().map(|a| p.transform_point(a)).collect();
        let fit = fit_uniform(&src, &dst);
        assert!((fit.scale - p.scale).norm() < 1e-9);
        assert!((fit.rotation - p.rotation).norm() < 1e-9);
    }
}
