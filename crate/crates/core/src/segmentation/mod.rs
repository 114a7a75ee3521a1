//! Instance segmentation from per-point centre offsets: the cloud is shifted
//! by its offsets so each instance condenses around its centre, then split
//! by DBSCAN. Segments are ranked by how many depth pixels they cover.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::io::{write_atomic, write_ply, PlyData};
use crate::geom::{KdTree, PointCloud, Vec3};
use crate::scenegen::Intrinsics;
use crate::{seed, Error, Result, SCHEMA_VERSION};

/// Label of points that belong to no cluster.
pub const NOISE: i32 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DbscanParams {
    /// Neighbourhood radius, metres (inclusive).
    pub eps: f64,
    /// Neighbourhood size, the point itself included, that makes a core
    /// point.
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self { eps: 0.005, min_pts: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResult {
    pub labels: Vec<i32>,
    /// Point indices of each cluster, ascending.
    pub clusters: Vec<Vec<usize>>,
    /// Distinct pixels covered by each cluster; empty until
    /// [`order_by_visibility`].
    pub visibility: Vec<usize>,
    /// Cluster indices by descending visibility, ties by lower index.
    pub order: Vec<usize>,
}

impl SegmentResult {
    pub fn from_labels(labels: Vec<i32>) -> Self {
        let k = labels.iter().map(|&l| l + 1).max().unwrap_or(0).max(0) as usize;
        let mut clusters = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            if l != NOISE {
                clusters[l as usize].push(i);
            }
        }
        Self {
            labels,
            clusters,
            visibility: Vec::new(),
            order: Vec::new(),
        }
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// `<dir>/segments.ply` (cloud with a `label` scalar) and
    /// `<dir>/segments.json` (sizes, visibility, order).
    pub fn save(&self, dir: &Path, cloud: &PointCloud) -> Result<()> {
        if cloud.len() != self.labels.len() {
            return Err(Error::InvalidInput("segment labels do not match the cloud".into()));
        }
        std::fs::create_dir_all(dir)?;
        let ply = PlyData::from_cloud(cloud).with_scalar("label", self.labels.iter().map(|&l| f64::from(l)).collect());
        write_ply(&dir.join("segments.ply"), &ply, true)?;
        let summary = SegmentSummary {
            schema_version: SCHEMA_VERSION,
            points: self.labels.len(),
            noise: self.noise_count(),
            sizes: self.clusters.iter().map(Vec::len).collect(),
            visibility: self.visibility.clone(),
            order: self.order.clone(),
        };
        let mut json = serde_json::to_vec_pretty(&summary)?;
        json.push(b'\n');
        write_atomic(&dir.join("segments.json"), &json)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentSummary {
    schema_version: u32,
    points: usize,
    noise: usize,
    sizes: Vec<usize>,
    visibility: Vec<usize>,
    order: Vec<usize>,
}

/// DBSCAN over `points`. Seeds are visited in index order and neighbour
/// lists are ascending, so the labelling is a pure function of the input;
/// a border point reachable from two clusters joins the one found first.
pub fn dbscan(points: &[Vec3], params: &DbscanParams) -> Vec<i32> {
    let tree = KdTree::new(points);
    let neighbours: Vec<Vec<usize>> = points.par_iter().map(|p| tree.within(p, params.eps)).collect();
    expand(&neighbours, params.min_pts)
}

/// Cluster expansion from precomputed ascending neighbour lists.
pub fn expand(neighbours: &[Vec<usize>], min_pts: usize) -> Vec<i32> {
    const UNSEEN: i32 = -2;
    let n = neighbours.len();
    let mut labels = vec![UNSEEN; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for i in 0..n {
        if labels[i] != UNSEEN {
            continue;
        }
        if neighbours[i].len() < min_pts {
            labels[i] = NOISE;
            continue;
        }
        labels[i] = next;
        queue.extend(neighbours[i].iter().copied());
        while let Some(j) = queue.pop_front() {
            if labels[j] == NOISE {
                labels[j] = next;
            }
            if labels[j] != UNSEEN {
                continue;
            }
            labels[j] = next;
            if neighbours[j].len() >= min_pts {
                queue.extend(neighbours[j].iter().copied());
            }
        }
        next += 1;
    }
    labels
}

/// DBSCAN on the shifted cloud `p + offset`; labels refer to the original
/// points.
pub fn cluster_offsets(cloud: &PointCloud, offsets: &[Vec3], params: &DbscanParams) -> Result<SegmentResult> {
    if offsets.len() != cloud.len() {
        return Err(Error::InvalidInput(format!(
            "{} offsets for {} points",
            offsets.len(),
            cloud.len()
        )));
    }
    let shifted: Vec<Vec3> = cloud.points.iter().zip(offsets).map(|(p, o)| p + o).collect();
    Ok(SegmentResult::from_labels(dbscan(&shifted, params)))
}

/// Offsets corrupted by isotropic Gaussian noise, standing in for a learned
/// offset predictor.
pub fn noisy_offsets(offsets: &[Vec3], sigma: f64, seed: u64) -> Vec<Vec3> {
    if sigma <= 0.0 {
        return offsets.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let mut rng = seed::rng(seed);
    offsets
        .iter()
        .map(|o| o + Vec3::from_fn(|_, _| normal.sample(&mut rng)))
        .collect()
}

/// Counts the distinct depth pixels each cluster's points project to and
/// orders clusters by that count, descending, ties by lower index.
pub fn order_by_visibility(mut seg: SegmentResult, cloud: &PointCloud, intrinsics: &Intrinsics) -> SegmentResult {
    seg.visibility = seg
        .clusters
        .iter()
        .map(|members| {
            members
                .iter()
                .filter_map(|&i| intrinsics.project(&cloud.points[i]))
                .collect::<BTreeSet<_>>()
                .len()
        })
        .collect();
    let mut order: Vec<usize> = (0..seg.clusters.len()).collect();
    order.sort_by(|&a, &b| seg.visibility[b].cmp(&seg.visibility[a]).then(a.cmp(&b)));
    seg.order = order;
    seg
}

/// Fraction of points whose predicted label maps to their true label under
/// the best one-to-one matching found greedily by overlap. Noise in either
/// labelling counts as its own class.
pub fn label_agreement(predicted: &[i32], truth: &[i32]) -> f64 {
    assert_eq!(predicted.len(), truth.len());
    if predicted.is_empty() {
        return 1.0;
    }
    let mut overlap = std::collections::BTreeMap::<(i32, i32), usize>::new();
    for (&p, &t) in predicted.iter().zip(truth) {
        *overlap.entry((p, t)).or_default() += 1;
    }
    let mut pairs: Vec<((i32, i32), usize)> = overlap.into_iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut used_p = BTreeSet::new();
    let mut used_t = BTreeSet::new();
    let mut agree = 0;
    for ((p, t), count) in pairs {
        if (p == NOISE) != (t == NOISE) {
            continue;
        }
        if !used_p.contains(&p) && !used_t.contains(&t) {
            used_p.insert(p);
            used_t.insert(t);
            agree += count;
        }
    }
    agree as f64 / predicted.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Textbook DBSCAN over an all-pairs distance scan.
    fn brute_dbscan(points: &[Vec3], params: &DbscanParams) -> Vec<i32> {
        let r2 = params.eps * params.eps;
        let neighbours: Vec<Vec<usize>> = points
            .iter()
            .map(|p| (0..points.len()).filter(|&j| (points[j] - p).norm_squared() <= r2).collect())
            .collect();
        expand(&neighbours, params.min_pts)
    }

    /// Renames labels by first appearance so permuted labellings compare
    /// equal.
    fn canonical(labels: &[i32]) -> Vec<i32> {
        let mut map = std::collections::BTreeMap::new();
        labels
            .iter()
            .map(|&l| {
                if l == NOISE {
                    NOISE
                } else {
                    let k = map.len() as i32;
                    *map.entry(l).or_insert(k)
                }
            })
            .collect()
    }

    fn blob(rng: &mut impl Rng, c: Vec3, n: usize, r: f64) -> Vec<Vec3> {
        (0..n)
            .map(|_| c + Vec3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r)))
            .collect()
    }

    #[test]
    fn collapsed_groups_form_two_clusters() {
        let mut rng = seed::rng(1);
        let (a, b) = (Vec3::new(0.0, 0.0, 0.5), Vec3::new(0.1, 0.0, 0.5));
        let mut pts = blob(&mut rng, a, 60, 0.02);
        pts.extend(blob(&mut rng, b, 40, 0.02));
        let offsets: Vec<Vec3> = pts.iter().enumerate().map(|(i, p)| if i < 60 { a - p } else { b - p }).collect();
        let seg = cluster_offsets(&PointCloud::new(pts), &offsets, &DbscanParams::default()).unwrap();
        assert_eq!(seg.clusters.len(), 2);
        assert_eq!(seg.noise_count(), 0);
        assert_eq!(seg.clusters[0], (0..60).collect::<Vec<_>>());
        assert!(cluster_offsets(&PointCloud::new(vec![Vec3::zeros()]), &[], &DbscanParams::default()).is_err());
        let empty = cluster_offsets(&PointCloud::default(), &[], &DbscanParams::default()).unwrap();
        assert!(empty.labels.is_empty() && empty.clusters.is_empty());
    }

    #[test]
    fn tiny_eps_gives_all_noise() {
        let pts: Vec<Vec3> = (0..50).map(|i| Vec3::new(i as f64 * 0.01, 0.0, 0.0)).collect();
        let labels = dbscan(&pts, &DbscanParams { eps: 0.001, min_pts: 2 });
        assert!(labels.iter().all(|&l| l == NOISE));
    }

    #[test]
    fn matches_brute_force_on_500_points() {
        let mut rng = seed::rng(7);
        let mut pts = Vec::new();
        for c in 0..5 {
            pts.extend(blob(&mut rng, Vec3::new(c as f64 * 0.03, 0.0, 0.0), 90, 0.008));
        }
        pts.extend(blob(&mut rng, Vec3::new(0.06, 0.0, 0.0), 50, 0.1));
        assert_eq!(pts.len(), 500);
        let params = DbscanParams { eps: 0.004, min_pts: 8 };
        let fast = dbscan(&pts, &params);
        let slow = brute_dbscan(&pts, &params);
        assert_eq!(canonical(&fast), canonical(&slow));
        assert!(fast.contains(&NOISE) && fast.iter().any(|&l| l >= 2));
    }

    #[test]
    fn visibility_counts_and_order() {
        let k = Intrinsics::default();
        // cluster 0: 20 pixels, cluster 1: 50 pixels, both seen through
        // several points per pixel
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for (label, count) in [(0, 20), (1, 50)] {
            for j in 0..count {
                for depth in [0.5, 0.6] {
                    pts.push(k.backproject(10 + j, 10 + 10 * label as usize, depth));
                    labels.push(label);
                }
            }
        }
        labels.push(NOISE);
        pts.push(k.backproject(0, 0, 0.5));
        let cloud = PointCloud::new(pts);
        let seg = order_by_visibility(SegmentResult::from_labels(labels.clone()), &cloud, &k);
        assert_eq!(seg.visibility, vec![20, 50]);
        assert_eq!(seg.order, vec![1, 0]);
        // exhaustive per-pixel tally
        let mut tally = vec![0usize; 2];
        for v in 0..k.height {
            for u in 0..k.width {
                for (c, t) in tally.iter_mut().enumerate() {
                    if (0..cloud.len()).any(|i| labels[i] == c as i32 && k.project(&cloud.points[i]) == Some((u, v))) {
                        *t += 1;
                    }
                }
            }
        }
        assert_eq!(tally, seg.visibility);
        let single = order_by_visibility(SegmentResult::from_labels(vec![0, 0]), &PointCloud::new(vec![Vec3::z(); 2]), &k);
        assert_eq!(single.order, vec![0]);
        assert!(seg.visibility.iter().sum::<usize>() <= k.pixels());
    }

    #[test]
    fn agreement_is_permutation_aware() {
        assert_eq!(label_agreement(&[0, 0, 1, 1], &[3, 3, 2, 2]), 1.0);
        assert_eq!(label_agreement(&[0, 0, 0, 1], &[3, 3, 2, 2]), 0.75);
        assert_eq!(label_agreement(&[NOISE, 0], &[5, 5]), 0.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn core_structure_is_permutation_invariant(seed in 0u64..1000, shift in 1usize..200) {
            let mut rng = seed::rng(seed);
            let mut pts = blob(&mut rng, Vec3::zeros(), 100, 0.01);
            pts.extend(blob(&mut rng, Vec3::new(0.05, 0.0, 0.0), 100, 0.01));
            let params = DbscanParams { eps: 0.003, min_pts: 5 };
            let a = dbscan(&pts, &params);
            let n = pts.len();
            let perm: Vec<usize> = (0..n).map(|i| (i * 7 + shift) % n).collect();
            let permuted: Vec<Vec3> = perm.iter().map(|&i| pts[i]).collect();
            let b = dbscan(&permuted, &params);
            let tree = KdTree::new(&pts);
            let core: Vec<bool> = pts.iter().map(|p| tree.within(p, params.eps).len() >= params.min_pts).collect();
            // noise sets agree, and two core points share a label in one run iff they do in the other
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(a[i] == NOISE, b[k] == NOISE);
            }
            let cores: Vec<usize> = (0..n).filter(|&k| core[perm[k]]).collect();
            for &x in cores.iter().take(60) {
                for &y in cores.iter().take(60) {
                    prop_assert_eq!(a[perm[x]] == a[perm[y]], b[x] == b[y]);
                }
            }
        }
    }
}
