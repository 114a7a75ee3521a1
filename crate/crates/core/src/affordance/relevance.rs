use super::ContactHeatmap;
use crate::geom::{Pose9D, Vec3};
use crate::grasping::{close_fingers, Grasp, GripperModel};

/// Relevance of a grasp whose predicted contacts are empty.
pub const NO_CONTACT_RELEVANCE: f64 = 0.0;

/// Predicted task relevance of a camera-frame grasp: the canonical template
/// carrying `heatmap` is mapped into the camera by `pose`, the gripper is
/// closed on it, and the heatmap is averaged over the contacts.
pub fn task_relevance(grasp: &Grasp, pose: &Pose9D, heatmap: &ContactHeatmap, gripper: &GripperModel) -> f64 {
    task_relevance_or(grasp, pose, heatmap, gripper, NO_CONTACT_RELEVANCE)
}

/// [`task_relevance`] with an explicit no-contact value.
pub fn task_relevance_or(grasp: &Grasp, pose: &Pose9D, heatmap: &ContactHeatmap, gripper: &GripperModel, no_contact: f64) -> f64 {
    let points: Vec<Vec3> = heatmap.cloud.points.iter().map(|p| pose.transform_point(p)).collect();
    let contacts = close_fingers(&points, grasp, gripper).all_contacts();
    if contacts.is_empty() {
        return no_contact;
    }
    // Mean taken relative to the first value so that equal values average
    // to exactly that value; ranking by a constant heatmap then cannot
    // reorder grasps through rounding.
    let base = heatmap.p[contacts[0]];
    base + contacts.iter().map(|&i| heatmap.p[i] - base).sum::<f64>() / contacts.len() as f64
}

/// `P(T, G) = P(T | G) · P(G)`.
pub fn joint_score(p_g: f64, p_t_given_g: f64) -> f64 {
    p_g * p_t_given_g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{poisson_disk_sample, rotation_from_rotvec, shapes, Pose6D};
    use crate::grasping::GripperParams;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn setup() -> (ContactHeatmap, GripperModel) {
        let m = shapes::cuboid(Vec3::new(0.02, 0.04, 0.03));
        let cloud = poisson_disk_sample(&m, 0.002, 1).unwrap();
        // left half 0.2, right half 0.8
        let p = cloud.points.iter().map(|q| if q.x < 0.0 { 0.2 } else { 0.8 }).collect();
        let mut hm = ContactHeatmap::unexplored(cloud);
        hm.p = p;
        (hm, GripperModel::new(GripperParams::default()).unwrap())
    }

    fn top_down(t: Vec3) -> Grasp {
        Grasp::new(Pose6D::new(rotation_from_rotvec(&(Vec3::y() * PI)), t), 0.03)
    }

    #[test]
    fn mean_over_contacts() {
        let (hm, g) = setup();
        let r = task_relevance(&top_down(Vec3::zeros()), &Pose9D::identity(), &hm, &g);
        // contacts lie on both x faces; the two faces are sampled alike
        assert!((r - 0.5).abs() < 0.1, "{r}");
        for c in [1.0, 0.7, 0.1, 1.0 / 3.0] {
            let mut constant = hm.clone();
            constant.p.iter_mut().for_each(|v| *v = c);
            assert_eq!(task_relevance(&top_down(Vec3::zeros()), &Pose9D::identity(), &constant, &g), c);
        }
        let free = top_down(Vec3::new(0.0, 0.5, 0.0));
        assert_eq!(task_relevance(&free, &Pose9D::identity(), &hm, &g), 0.0);
    }

    #[test]
    fn joint_score_examples() {
        assert_eq!(joint_score(1.0, 0.75), 0.75);
        assert_eq!(joint_score(0.0, 0.3), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn invariant_under_joint_rigid_motion(
            rv in prop::array::uniform3(-3.0f64..3.0),
            t in prop::array::uniform3(-1.0f64..1.0),
            dy in -0.01f64..0.01,
        ) {
            let (hm, g) = setup();
            let grasp = top_down(Vec3::new(0.0, dy, 0.0));
            let pose = Pose9D::new(rotation_from_rotvec(&Vec3::new(0.1, 0.2, -0.3)), Vec3::new(0.01, 0.0, 0.2), Vec3::new(1.0, 1.0, 1.0));
            let motion = Pose6D::new(rotation_from_rotvec(&Vec3::from(rv)), Vec3::from(t));
            let moved = Pose9D::new(motion.rotation * pose.rotation, motion.transform_point(&pose.translation), pose.scale);
            let a = task_relevance(&grasp.transformed(&pose.rigid()), &pose, &hm, &g);
            let b = task_relevance(&grasp.transformed(&moved.rigid()), &moved, &hm, &g);
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn joint_score_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
            if a <= b {
                prop_assert!(joint_score(a, c) <= joint_score(b, c));
                prop_assert!(joint_score(c, a) <= joint_score(c, b));
            }
        }
    }
}
