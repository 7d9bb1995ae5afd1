//! Bidirectional RRT (RRT-Connect) in the joint space of one arm, used when a
//! straight joint interpolation is blocked.

use rand::Rng;

use crate::kinematics::{linear_joint_motion, ArmModel, JointVector};
use crate::util::Deadline;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrtConfig {
    /// Largest joint-space extension per tree growth, radians (max-norm).
    pub extend: f64,
    pub max_iterations: usize,
    /// Joint step used to validate edges and densify the result.
    pub resolution: f64,
    pub shortcut_rounds: usize,
}

impl Default for RrtConfig {
    fn default() -> Self {
        Self {
            extend: 0.3,
            max_iterations: 4000,
            resolution: 0.05,
            shortcut_rounds: 60,
        }
    }
}

struct Tree {
    nodes: Vec<JointVector>,
    parent: Vec<usize>,
}

impl Tree {
    fn new(root: JointVector) -> Tree {
        Tree {
            nodes: vec![root],
            parent: vec![usize::MAX],
        }
    }

    fn nearest(&self, q: &JointVector) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = n.distance(q);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    fn path_to_root(&self, mut i: usize) -> Vec<JointVector> {
        let mut out = Vec::new();
        while i != usize::MAX {
            out.push(self.nodes[i].clone());
            i = self.parent[i];
        }
        out
    }
}

enum Extend {
    Reached(usize),
    Advanced(usize),
    Trapped,
}

fn edge_valid(a: &JointVector, b: &JointVector, cfg: &RrtConfig, valid: &impl Fn(&JointVector) -> bool) -> bool {
    linear_joint_motion(a, b, cfg.resolution).iter().skip(1).all(valid)
}

fn extend(tree: &mut Tree, target: &JointVector, cfg: &RrtConfig, valid: &impl Fn(&JointVector) -> bool) -> Extend {
    let near = tree.nearest(target);
    let from = tree.nodes[near].clone();
    let span = from.max_delta(target);
    let (new, reached) = if span <= cfg.extend {
        (target.clone(), true)
    } else {
        (from.lerp(target, cfg.extend / span), false)
    };
    if !edge_valid(&from, &new, cfg, valid) {
        return Extend::Trapped;
    }
    tree.nodes.push(new);
    tree.parent.push(near);
    let id = tree.nodes.len() - 1;
    if reached {
        Extend::Reached(id)
    } else {
        Extend::Advanced(id)
    }
}

fn connect(tree: &mut Tree, target: &JointVector, cfg: &RrtConfig, valid: &impl Fn(&JointVector) -> bool) -> Option<usize> {
    loop {
        match extend(tree, target, cfg, valid) {
            Extend::Reached(id) => return Some(id),
            Extend::Advanced(_) => continue,
            Extend::Trapped => return None,
        }
    }
}

fn shortcut<R: Rng + ?Sized>(
    path: &mut Vec<JointVector>,
    cfg: &RrtConfig,
    valid: &impl Fn(&JointVector) -> bool,
    rng: &mut R,
) {
    for _ in 0..cfg.shortcut_rounds {
        if path.len() < 3 {
            return;
        }
        let i = rng.gen_range(0..path.len() - 2);
        let j = rng.gen_range(i + 2..path.len());
        if edge_valid(&path[i], &path[j], cfg, valid) {
            path.drain(i + 1..j);
        }
    }
}

fn densify(path: &[JointVector], resolution: f64) -> Vec<JointVector> {
    let mut out = vec![path[0].clone()];
    for w in path.windows(2) {
        out.extend(linear_joint_motion(&w[0], &w[1], resolution).into_iter().skip(1));
    }
    out
}

/// Collision-free joint path from `start` to `goal` with consecutive
/// configurations at most `cfg.resolution` apart per joint. Both endpoints
/// must satisfy `valid`.
pub fn plan_joint_path<R: Rng + ?Sized>(
    arm: &ArmModel,
    start: &JointVector,
    goal: &JointVector,
    valid: impl Fn(&JointVector) -> bool,
    cfg: &RrtConfig,
    rng: &mut R,
    deadline: &Deadline,
) -> Option<Vec<JointVector>> {
    if !valid(start) || !valid(goal) {
        return None;
    }
    if edge_valid(start, goal, cfg, &valid) {
        return Some(linear_joint_motion(start, goal, cfg.resolution));
    }
    let mut a = Tree::new(start.clone());
    let mut b = Tree::new(goal.clone());
    let mut a_is_start = true;
    for _ in 0..cfg.max_iterations {
        if deadline.expired() {
            return None;
        }
        let sample = arm.random_configuration(rng);
        if let Extend::Advanced(id) | Extend::Reached(id) = extend(&mut a, &sample, cfg, &valid) {
            let q = a.nodes[id].clone();
            if let Some(jd) = connect(&mut b, &q, cfg, &valid) {
                let mut from_a = a.path_to_root(id);
                from_a.reverse();
                let from_b = b.path_to_root(jd);
                from_a.extend(from_b.into_iter().skip(1));
                if !a_is_start {
                    from_a.reverse();
                }
                shortcut(&mut from_a, cfg, &valid, rng);
                return Some(densify(&from_a, cfg.resolution));
            }
        }
        std::mem::swap(&mut a, &mut b);
        a_is_start = !a_is_start;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, Vec3};
    use crate::kinematics::joint;
    use crate::util::stream_rng;

    fn planar_arm() -> ArmModel {
        ArmModel {
            name: "planar".into(),
            base: Pose::identity(),
            joints: vec![
                joint([0.0; 3], [0.0; 3], Vec3::z(), [-180.0, 180.0]),
                joint([1.0, 0.0, 0.0], [0.0; 3], Vec3::z(), [-180.0, 180.0]),
            ],
            links: vec![],
            tool: Pose::identity(),
        }
    }

    #[test]
    fn straight_path_when_unobstructed() {
        let arm = planar_arm();
        let a = JointVector(vec![0.0, 0.0]);
        let b = JointVector(vec![1.0, -0.5]);
        let mut rng = stream_rng(1, &[]);
        let path = plan_joint_path(&arm, &a, &b, |_| true, &RrtConfig::default(), &mut rng, &Deadline::never()).unwrap();
        assert_eq!(path.first(), Some(&a));
        assert_eq!(path.last(), Some(&b));
        assert_eq!(path.len(), 21);
    }

    #[test]
    fn detours_around_a_forbidden_band() {
        let arm = planar_arm();
        // Joint 0 may cross 0 only while joint 1 is above 1.5.
        let valid = |q: &JointVector| q[0].abs() > 0.2 || q[1] > 1.5;
        let a = JointVector(vec![-1.0, 0.0]);
        let b = JointVector(vec![1.0, 0.0]);
        let cfg = RrtConfig::default();
        let mut rng = stream_rng(3, &[]);
        let path = plan_joint_path(&arm, &a, &b, valid, &cfg, &mut rng, &Deadline::never()).unwrap();
        assert_eq!(path.first(), Some(&a));
        assert_eq!(path.last(), Some(&b));
        for w in path.windows(2) {
            assert!(w[0].max_delta(&w[1]) <= cfg.resolution + 1e-12);
        }
        assert!(path.iter().all(valid));
    }

    #[test]
    fn invalid_endpoint_fails() {
        let arm = planar_arm();
        let a = JointVector(vec![0.0, 0.0]);
        let mut rng = stream_rng(1, &[]);
        let got = plan_joint_path(&arm, &a, &a, |_| false, &RrtConfig::default(), &mut rng, &Deadline::never());
        assert!(got.is_none());
    }
}
