//! Collision world assembled from a scenario: static boxes, robot bodies,
//! arm link capsules, the tool and the slider.

use std::ops::Range;

use crate::cable::{Body, ExclusionZone};
use crate::geometry::{capsule_capsule_distance, Capsule, Obb, Shape, Vec3};
use crate::kinematics::{forward_kinematics, Hand, JointVector, RobotModel};
use crate::scenario::Scenario;

/// Radius of the slider body used for robot and environment checks.
pub const SLIDER_RADIUS: f64 = 0.015;

/// World-space link capsules of both arms of one robot.
#[derive(Debug, Clone)]
pub struct DualArm {
    pub left: Vec<Capsule>,
    pub right: Vec<Capsule>,
}

impl DualArm {
    pub fn new(robot: &RobotModel, left: &JointVector, right: &JointVector) -> DualArm {
        let fk = |hand: Hand, q: &JointVector| {
            forward_kinematics(robot.arm(hand), q)
                .expect("joint vector length checked at load")
                .capsules
        };
        DualArm {
            left: fk(Hand::Left, left),
            right: fk(Hand::Right, right),
        }
    }

    pub fn arm(&self, hand: Hand) -> &[Capsule] {
        match hand {
            Hand::Left => &self.left,
            Hand::Right => &self.right,
        }
    }

    pub fn all(&self) -> std::iter::Chain<std::slice::Iter<'_, Capsule>, std::slice::Iter<'_, Capsule>> {
        self.left.iter().chain(self.right.iter())
    }
}

fn capsules_clear_of_boxes<'c>(
    caps: impl IntoIterator<Item = &'c Capsule>,
    boxes: &[(String, Obb)],
    clearance: f64,
) -> bool {
    caps.into_iter().all(|c| {
        boxes
            .iter()
            .all(|(_, b)| Shape::Obb(*b).capsule_distance(c) >= clearance)
    })
}

fn capsule_sets_clear<'a, 'b>(
    a: impl IntoIterator<Item = &'a Capsule>,
    b: impl IntoIterator<Item = &'b Capsule> + Clone,
    clearance: f64,
) -> bool {
    a.into_iter()
        .all(|x| b.clone().into_iter().all(|y| capsule_capsule_distance(x, y) >= clearance))
}

/// Link capsules of `hand` excluding the wrist link when `skip_wrist` is set.
fn links(arm: &[Capsule], skip_wrist: bool) -> &[Capsule] {
    if skip_wrist && !arm.is_empty() {
        &arm[..arm.len() - 1]
    } else {
        arm
    }
}

pub struct World<'a> {
    pub scenario: &'a Scenario,
    pub clearance: f64,
}

impl<'a> World<'a> {
    pub fn new(scenario: &'a Scenario) -> World<'a> {
        World {
            scenario,
            clearance: scenario.params.clearance,
        }
    }

    pub fn master_arms(&self, left: &JointVector, right: &JointVector) -> DualArm {
        DualArm::new(&self.scenario.master, left, right)
    }

    pub fn assistant_arms(&self, left: &JointVector, right: &JointVector) -> DualArm {
        DualArm::new(&self.scenario.assistant, left, right)
    }

    /// Master arms against the environment, the master body and each other;
    /// the tool, when given, against all of these except the wrist links of
    /// the hands in `contact`.
    pub fn master_clear(&self, arms: &DualArm, tool: Option<&Capsule>, contact: &[Hand]) -> bool {
        let sc = self.scenario;
        let c = self.clearance;
        if !capsules_clear_of_boxes(arms.all(), &sc.environment, c)
            || !capsules_clear_of_boxes(arms.all(), &sc.master.body, c)
            || !capsule_sets_clear(&arms.left, &arms.right, c)
        {
            return false;
        }
        let Some(tool) = tool else { return true };
        if !capsules_clear_of_boxes([tool], &sc.environment, c)
            || !capsules_clear_of_boxes([tool], &sc.master.body, c)
        {
            return false;
        }
        [Hand::Left, Hand::Right].iter().all(|h| {
            capsule_sets_clear(links(arms.arm(*h), contact.contains(h)), [tool], c)
        })
    }

    /// Assistant arms against the environment, both robot bodies, the master
    /// arms, the tool and each other. The slider is checked against
    /// everything except the wrist of the hand holding it.
    pub fn assistant_clear(
        &self,
        arms: &DualArm,
        master: &DualArm,
        tool: &Capsule,
        slider: Option<(&Capsule, Hand)>,
    ) -> bool {
        let sc = self.scenario;
        let c = self.clearance;
        let ok = capsules_clear_of_boxes(arms.all(), &sc.environment, c)
            && capsules_clear_of_boxes(arms.all(), &sc.assistant.body, c)
            && capsules_clear_of_boxes(arms.all(), &sc.master.body, c)
            && capsule_sets_clear(&arms.left, &arms.right, c)
            && capsule_sets_clear(arms.all(), master.all(), c)
            && capsule_sets_clear(arms.all(), [tool], c);
        if !ok {
            return false;
        }
        let Some((slider, hand)) = slider else { return true };
        capsules_clear_of_boxes([slider], &sc.environment, c)
            && capsules_clear_of_boxes([slider], &sc.master.body, c)
            && capsule_sets_clear(master.all(), [slider], c)
            && capsule_sets_clear(links(arms.arm(hand), true), [slider], c)
            && capsule_sets_clear(arms.arm(hand.other()), [slider], c)
    }

    /// Bodies seen by the cable. The assistant is left out when `None`.
    pub fn cable_scene(&self, master: &DualArm, assistant: Option<&DualArm>) -> CableScene {
        let sc = self.scenario;
        let mut bodies = Vec::new();
        let boxed = |bodies: &mut Vec<Body>, list: &[(String, Obb)]| {
            for (name, obb) in list {
                bodies.push(Body::new(name.clone(), Shape::Obb(*obb)));
            }
        };
        boxed(&mut bodies, &sc.environment);
        boxed(&mut bodies, &sc.master.body);
        if assistant.is_some() {
            boxed(&mut bodies, &sc.assistant.body);
        }
        let push_arm = |bodies: &mut Vec<Body>, prefix: &str, caps: &[Capsule]| -> Range<usize> {
            let start = bodies.len();
            for (i, c) in caps.iter().enumerate() {
                bodies.push(Body::new(format!("{prefix}.link{i}"), Shape::Capsule(*c)));
            }
            start..bodies.len()
        };
        let master_links = [
            push_arm(&mut bodies, "master.left", &master.left),
            push_arm(&mut bodies, "master.right", &master.right),
        ];
        let assistant_links = assistant.map(|a| {
            [
                push_arm(&mut bodies, "assistant.left", &a.left),
                push_arm(&mut bodies, "assistant.right", &a.right),
            ]
        });
        CableScene {
            bodies,
            master_links,
            assistant_links,
        }
    }
}

fn hand_index(hand: Hand) -> usize {
    match hand {
        Hand::Left => 0,
        Hand::Right => 1,
    }
}

/// Cable bodies with the index ranges of every arm's links.
#[derive(Debug, Clone)]
pub struct CableScene {
    pub bodies: Vec<Body>,
    master_links: [Range<usize>; 2],
    assistant_links: Option<[Range<usize>; 2]>,
}

impl CableScene {
    pub fn master_zone(&self, hand: Hand, center: Vec3, radius: f64) -> ExclusionZone {
        ExclusionZone {
            center,
            radius,
            bodies: self.master_links[hand_index(hand)].clone().collect(),
        }
    }

    pub fn assistant_zone(&self, hand: Hand, center: Vec3, radius: f64) -> ExclusionZone {
        let bodies = self
            .assistant_links
            .as_ref()
            .map(|r| r[hand_index(hand)].clone().collect())
            .unwrap_or_default();
        ExclusionZone { center, radius, bodies }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_scenario;

    #[test]
    fn home_configurations_are_collision_free() {
        let sc = default_scenario();
        let world = World::new(&sc);
        let m = world.master_arms(&sc.master.home_left, &sc.master.home_right);
        let a = world.assistant_arms(&sc.assistant.home_left, &sc.assistant.home_right);
        let tool = sc.tool.body_at(&sc.start);
        assert!(world.master_clear(&m, Some(&tool), &[]));
        assert!(world.assistant_clear(&a, &m, &tool, None));
    }

    #[test]
    fn cable_scene_indexes_arm_links() {
        let sc = default_scenario();
        let world = World::new(&sc);
        let m = world.master_arms(&sc.master.home_left, &sc.master.home_right);
        let scene = world.cable_scene(&m, None);
        let zone = scene.master_zone(Hand::Right, Vec3::zeros(), 0.1);
        assert_eq!(zone.bodies.len(), m.right.len());
        for i in zone.bodies {
            assert!(scene.bodies[i].name.starts_with("master.right"));
        }
    }
}
