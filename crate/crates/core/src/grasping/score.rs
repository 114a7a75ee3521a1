use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{grasp_oracle, Grasp, GripperModel};
use crate::geom::{rotation_from_rotvec, PointCloud, Pose6D, TriMesh, Vec3};
use crate::seed;

/// Pose noise used to estimate grasp success probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbParams {
    pub samples: usize,
    /// Per-axis translation standard deviation, metres.
    pub sigma_t: f64,
    /// Per-axis rotation-vector standard deviation, degrees.
    pub sigma_r_deg: f64,
}

impl Default for PerturbParams {
    fn default() -> Self {
        Self {
            samples: 50,
            sigma_t: 0.003,
            sigma_r_deg: 5.0,
        }
    }
}

/// The `i`-th perturbed pose: world-frame translation noise, gripper-frame
/// rotation noise. Depends only on `(seed, i)`.
pub fn perturbed_pose(pose: &Pose6D, params: &PerturbParams, seed: u64, i: usize) -> Pose6D {
    let mut rng = seed::rng(seed::split_index(seed, i as u64));
    let nt = Normal::new(0.0, params.sigma_t.max(0.0)).expect("finite sigma");
    let nr = Normal::new(0.0, params.sigma_r_deg.max(0.0).to_radians()).expect("finite sigma");
    let dt = Vec3::new(nt.sample(&mut rng), nt.sample(&mut rng), nt.sample(&mut rng));
    let dr = Vec3::new(nr.sample(&mut rng), nr.sample(&mut rng), nr.sample(&mut rng));
    Pose6D::new(pose.rotation * rotation_from_rotvec(&dr), pose.translation + dt)
}

/// Fraction of perturbed copies of `grasp` that the oracle accepts.
/// Perturbations are evaluated in parallel; the result does not depend on the
/// thread count.
pub fn score_grasp(
    object: &TriMesh,
    cloud: &PointCloud,
    grasp: &Grasp,
    gripper: &GripperModel,
    params: &PerturbParams,
    seed: u64,
) -> f64 {
    if params.samples == 0 {
        return 0.0;
    }
    let hits: usize = (0..params.samples)
        .into_par_iter()
        .map(|i| {
            let g = Grasp {
                pose: perturbed_pose(&grasp.pose, params, seed, i),
                ..*grasp
            };
            usize::from(grasp_oracle(object, cloud, &g, gripper).success)
        })
        .sum();
    hits as f64 / params.samples as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{poisson_disk_sample, shapes};
    use crate::grasping::GripperParams;

    #[test]
    fn deep_centred_grasp_on_long_box_is_robust() {
        let m = shapes::cuboid(Vec3::new(0.02, 0.1, 0.03));
        let cloud = poisson_disk_sample(&m, 0.002, 1).unwrap();
        let g = GripperModel::new(GripperParams::default()).unwrap();
        let r = rotation_from_rotvec(&(Vec3::y() * std::f64::consts::PI));
        let grasp = Grasp::new(Pose6D::new(r, Vec3::new(0.0, 0.0, 0.0)), 0.032);
        let small = PerturbParams {
            sigma_t: 0.0005,
            sigma_r_deg: 1.0,
            ..Default::default()
        };
        assert_eq!(score_grasp(&m, &cloud, &grasp, &g, &small, 4), 1.0);
        // every perturbation of the nominal grasp is accepted individually
        for i in 0..small.samples {
            let p = Grasp { pose: perturbed_pose(&grasp.pose, &small, 4, i), ..grasp };
            assert!(grasp_oracle(&m, &cloud, &p, &g).success);
        }
        let free = Grasp::new(Pose6D::new(r, Vec3::new(0.0, 0.3, 0.0)), 0.032);
        assert_eq!(score_grasp(&m, &cloud, &free, &g, &PerturbParams::default(), 4), 0.0);
    }

    #[test]
    fn independent_of_thread_count() {
        let m = shapes::cuboid(Vec3::new(0.02, 0.04, 0.03));
        let cloud = poisson_disk_sample(&m, 0.002, 1).unwrap();
        let g = GripperModel::new(GripperParams::default()).unwrap();
        let r = rotation_from_rotvec(&(Vec3::y() * std::f64::consts::PI));
        let grasp = Grasp::new(Pose6D::new(r, Vec3::new(0.0, 0.01, 0.01)), 0.028);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| score_grasp(&m, &cloud, &grasp, &g, &PerturbParams::default(), 11))
        };
        assert_eq!(run(1), run(4));
    }
}
