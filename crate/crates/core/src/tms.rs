//! Master-robot task motion sequence: a regrasp graph over configured grasps
//! and tool poses (start, goals, table placements, in-air handover), searched
//! for hop-count shortest paths and expanded into discretized steps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cable::{cable_collision_events, CableCheck, CableState, CollisionEvent, SliderState};
use crate::geometry::{interpolate_pose, pose, rotation_distance, Capsule, Pose, Vec3};
use crate::kinematics::{linear_joint_motion, solve_ik, Hand, IkConfig, JointVector};
use crate::rrt::{plan_joint_path, RrtConfig};
use crate::scenario::Scenario;
use crate::util::{stream_rng, Deadline};
use crate::world::World;

/// A gripper pose relative to the tool model frame, for one hand.
#[derive(Debug, Clone, PartialEq)]
pub struct Grasp {
    pub name: String,
    pub hand: Hand,
    pub pose: Pose,
    pub aperture: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseClass {
    Start,
    Goal(u32),
    Placement(usize),
    Handover,
}

impl PoseClass {
    pub fn on_table(&self) -> bool {
        !matches!(self, PoseClass::Handover)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Transit,
    Transfer,
    Release,
    Regrasp,
    HandoverGive,
    HandoverTake,
}

/// A hand holding the tool with a given grasp index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hold {
    pub hand: Hand,
    pub grasp: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TmsStep {
    pub l: usize,
    pub tool: Pose,
    pub left: JointVector,
    pub right: JointVector,
    pub action: Action,
    /// Hand whose joints move in this step.
    pub active: Option<Hand>,
    pub holds: Vec<Hold>,
}

impl TmsStep {
    pub fn grasping(&self) -> Vec<Hand> {
        self.holds.iter().map(|h| h.hand).collect()
    }

    pub fn joints(&self, hand: Hand) -> &JointVector {
        match hand {
            Hand::Left => &self.left,
            Hand::Right => &self.right,
        }
    }

    /// Hands touching or about to touch the tool.
    pub fn contact_hands(&self) -> Vec<Hand> {
        let mut hands = self.grasping();
        if let (Some(a), Action::Release | Action::Regrasp | Action::HandoverGive | Action::HandoverTake) =
            (self.active, self.action)
        {
            if !hands.contains(&a) {
                hands.push(a);
            }
        }
        hands
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TmsError {
    #[error("no grasp is feasible at any tool pose")]
    EmptyGraph,
    #[error("goal {0} is not defined")]
    UnknownGoal(u32),
    #[error("no regrasp path reaches goal {0}")]
    NoPath(u32),
    #[error("planning budget exceeded")]
    Timeout,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub grasp: usize,
    pub class: PoseClass,
    pub tool: Pose,
    pub q_grasp: JointVector,
    pub q_pre: JointVector,
    /// Configuration with the tool lifted off the table.
    pub q_lift: Option<JointVector>,
    /// Home to pre-grasp, then pre-grasp to grasp, with the other arm at home.
    pub approach: Option<(Vec<JointVector>, Vec<JointVector>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Transfer,
    Regrasp,
    Handover,
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
    pub length: f64,
    pub steps: Vec<TmsStep>,
}

#[derive(Debug, Clone)]
pub struct RegraspGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
}

impl RegraspGraph {
    pub fn node_index(&self, grasp: usize, class: PoseClass) -> Option<usize> {
        self.nodes.iter().position(|n| n.grasp == grasp && n.class == class)
    }

    pub fn edges_from(&self, node: usize) -> impl Iterator<Item = &Edge> {
        self.adjacency[node].iter().map(|e| &self.edges[*e])
    }
}

/// Joint-space length of a step sequence summed over both arms.
fn steps_length(steps: &[TmsStep]) -> f64 {
    steps
        .windows(2)
        .map(|w| w[0].left.distance(&w[1].left) + w[0].right.distance(&w[1].right))
        .sum()
}

fn offset_z(p: &Pose, dz: f64) -> Pose {
    pose(p.translation.vector + Vec3::new(0.0, 0.0, dz), p.rotation)
}

/// Shared planning context for the master robot.
pub struct TmsPlanner<'a> {
    pub scenario: &'a Scenario,
    pub world: World<'a>,
    pub ik: IkConfig,
    pub rrt: RrtConfig,
    pub seed: u64,
}

const CART_TRANSLATION: f64 = 0.01;
const CART_ROTATION: f64 = 3.0 * std::f64::consts::PI / 180.0;
const MAX_IK_JUMP: f64 = 0.3;

impl<'a> TmsPlanner<'a> {
    pub fn new(scenario: &'a Scenario, seed: u64) -> TmsPlanner<'a> {
        TmsPlanner {
            scenario,
            world: World::new(scenario),
            ik: IkConfig::default(),
            rrt: RrtConfig {
                resolution: scenario.params.joint_step,
                max_iterations: 1500,
                ..RrtConfig::default()
            },
            seed,
        }
    }

    pub fn classes(&self) -> Vec<PoseClass> {
        let sc = self.scenario;
        let mut out = vec![PoseClass::Start];
        out.extend(sc.goals.iter().map(|g| PoseClass::Goal(g.id)));
        out.extend((0..sc.placements.len()).map(PoseClass::Placement));
        out.push(PoseClass::Handover);
        out
    }

    pub fn class_pose(&self, class: PoseClass) -> Option<Pose> {
        let sc = self.scenario;
        match class {
            PoseClass::Start => Some(sc.start),
            PoseClass::Goal(id) => sc.goal(id).map(|g| g.pose),
            PoseClass::Placement(j) => sc.placements.get(j).copied(),
            PoseClass::Handover => Some(sc.handover),
        }
    }

    fn grasp(&self, g: usize) -> &Grasp {
        &self.scenario.tool.grasps[g]
    }

    fn home(&self, hand: Hand) -> &JointVector {
        self.scenario.master.home(hand)
    }

    fn tool_capsule(&self, tool: &Pose) -> Capsule {
        self.scenario.tool.body_at(tool)
    }

    fn pair(&self, hand: Hand, q: &JointVector, other: &JointVector) -> (JointVector, JointVector) {
        match hand {
            Hand::Left => (q.clone(), other.clone()),
            Hand::Right => (other.clone(), q.clone()),
        }
    }

    fn valid(&self, hand: Hand, q: &JointVector, other: &JointVector, tool: Option<&Pose>, contact: &[Hand]) -> bool {
        let (l, r) = self.pair(hand, q, other);
        let arms = self.world.master_arms(&l, &r);
        let cap = tool.map(|t| self.tool_capsule(t));
        self.world.master_clear(&arms, cap.as_ref(), contact)
    }

    fn gripper(&self, hand: Hand, q: &JointVector) -> Pose {
        self.scenario
            .master
            .arm(hand)
            .gripper_pose(q)
            .expect("joint vector length checked at load")
    }

    /// Tool pose implied by a hand configuration and grasp.
    pub fn carried_tool(&self, grasp: usize, q: &JointVector) -> Pose {
        let g = self.grasp(grasp);
        self.gripper(g.hand, q) * g.pose.inverse()
    }

    fn solve(&self, hand: Hand, target: &Pose, seed: &JointVector, tags: &[u64]) -> Option<JointVector> {
        let mut rng = stream_rng(self.seed, tags);
        solve_ik(self.scenario.master.arm(hand), target, seed, &self.ik, &mut rng).ok()
    }

    fn pregrasp_target(&self, grasp_target: &Pose) -> Pose {
        grasp_target * pose(Vec3::new(0.0, 0.0, -self.scenario.params.approach_distance), Default::default())
    }

    fn straight_valid(
        &self,
        hand: Hand,
        from: &JointVector,
        to: &JointVector,
        other: &JointVector,
        tool: Option<&Pose>,
        contact: &[Hand],
    ) -> Option<Vec<JointVector>> {
        let path = linear_joint_motion(from, to, self.scenario.params.joint_step);
        path.iter()
            .all(|q| self.valid(hand, q, other, tool, contact))
            .then_some(path)
    }

    #[allow(clippy::too_many_arguments)]
    fn connect_free(
        &self,
        hand: Hand,
        from: &JointVector,
        to: &JointVector,
        other: &JointVector,
        tool: &Pose,
        contact: &[Hand],
        tags: &[u64],
        deadline: &Deadline,
    ) -> Option<Vec<JointVector>> {
        let mut rng = stream_rng(self.seed, tags);
        plan_joint_path(
            self.scenario.master.arm(hand),
            from,
            to,
            |q| self.valid(hand, q, other, Some(tool), contact),
            &self.rrt,
            &mut rng,
            deadline,
        )
    }

    /// IK and collision screening of one (grasp, tool pose) node.
    pub fn build_node(&self, grasp: usize, class: PoseClass, deadline: &Deadline) -> Option<Node> {
        let tool = self.class_pose(class)?;
        let g = self.grasp(grasp);
        let hand = g.hand;
        let other = self.home(hand.other());
        let tags = [1, grasp as u64, class_tag(class)];
        let target = tool * g.pose;
        let q_grasp = self.solve(hand, &target, self.home(hand), &tags)?;
        if !self.valid(hand, &q_grasp, other, Some(&tool), &[hand]) {
            return None;
        }
        let q_pre = self.solve(hand, &self.pregrasp_target(&target), &q_grasp, &[2, grasp as u64, class_tag(class)])?;
        if q_pre.max_delta(&q_grasp) > MAX_IK_JUMP * 3.0 || !self.valid(hand, &q_pre, other, Some(&tool), &[hand]) {
            return None;
        }
        let q_lift = if class.on_table() {
            let lifted = offset_z(&tool, self.scenario.params.lift_height);
            let q = self.solve(hand, &(lifted * g.pose), &q_grasp, &[3, grasp as u64, class_tag(class)])?;
            let lifted_actual = self.carried_tool(grasp, &q);
            if !self.valid(hand, &q, other, Some(&lifted_actual), &[hand]) {
                return None;
            }
            Some(q)
        } else {
            None
        };
        let approach = if class.on_table() {
            self.approach(hand, &q_pre, &q_grasp, other, &[], &tool, &[4, grasp as u64, class_tag(class)], deadline)
        } else {
            None
        };
        Some(Node {
            grasp,
            class,
            tool,
            q_grasp,
            q_pre,
            q_lift,
            approach,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn approach(
        &self,
        hand: Hand,
        q_pre: &JointVector,
        q_grasp: &JointVector,
        other: &JointVector,
        holders: &[Hand],
        tool: &Pose,
        tags: &[u64],
        deadline: &Deadline,
    ) -> Option<(Vec<JointVector>, Vec<JointVector>)> {
        let mut contact = holders.to_vec();
        contact.push(hand);
        let last = self.straight_valid(hand, q_pre, q_grasp, other, Some(tool), &contact)?;
        let transit = self.connect_free(hand, self.home(hand), q_pre, other, tool, holders, tags, deadline)?;
        Some((transit, last))
    }

    /// Tool-carrying path through tool-pose waypoints by small Cartesian
    /// steps, ending at `q_end`.
    fn carry_cartesian(
        &self,
        grasp: usize,
        q0: &JointVector,
        waypoints: &[Pose],
        q_end: &JointVector,
    ) -> Option<Vec<JointVector>> {
        let g = self.grasp(grasp);
        let hand = g.hand;
        let arm = self.scenario.master.arm(hand);
        let step = self.scenario.params.joint_step;
        let cfg = IkConfig {
            restarts: 0,
            ..self.ik
        };
        let mut rng = stream_rng(self.seed, &[5, grasp as u64]);
        let mut q = q0.clone();
        let mut tool = self.carried_tool(grasp, q0);
        let mut path = vec![q0.clone()];
        for wp in waypoints {
            let dist = (wp.translation.vector - tool.translation.vector).norm();
            let ang = rotation_distance(&tool.rotation, &wp.rotation);
            let n = ((dist / CART_TRANSLATION).ceil().max((ang / CART_ROTATION).ceil()) as usize).max(1);
            let from = tool;
            for k in 1..=n {
                let target = interpolate_pose(&from, wp, k as f64 / n as f64) * g.pose;
                let next = solve_ik(arm, &target, &q, &cfg, &mut rng).ok()?;
                if next.max_delta(&q) > MAX_IK_JUMP {
                    return None;
                }
                path.extend(linear_joint_motion(&q, &next, step).into_iter().skip(1));
                q = next;
            }
            tool = *wp;
        }
        if q.max_delta(q_end) > MAX_IK_JUMP {
            return None;
        }
        path.extend(linear_joint_motion(&q, q_end, step).into_iter().skip(1));
        Some(path)
    }

    fn carry_valid(&self, grasp: usize, path: &[JointVector]) -> bool {
        let hand = self.grasp(grasp).hand;
        let other = self.home(hand.other());
        path.iter().all(|q| {
            let tool = self.carried_tool(grasp, q);
            self.valid(hand, q, other, Some(&tool), &[hand])
        })
    }

    /// Transfer path between two nodes of the same grasp.
    pub fn transfer_path(&self, a: &Node, b: &Node, deadline: &Deadline) -> Option<Vec<JointVector>> {
        let grasp = a.grasp;
        let lift = self.scenario.params.lift_height;
        let mut waypoints = Vec::new();
        if a.class.on_table() {
            waypoints.push(offset_z(&a.tool, lift));
        }
        if b.class.on_table() {
            waypoints.push(offset_z(&b.tool, lift));
        }
        waypoints.push(b.tool);
        if let Some(path) = self.carry_cartesian(grasp, &a.q_grasp, &waypoints, &b.q_grasp) {
            if self.carry_valid(grasp, &path) {
                return Some(path);
            }
        }
        // Joint-space fallback through the lift configurations.
        let hand = self.grasp(grasp).hand;
        let other = self.home(hand.other()).clone();
        let step = self.scenario.params.joint_step;
        let a_mid = a.q_lift.clone().unwrap_or_else(|| a.q_grasp.clone());
        let b_mid = b.q_lift.clone().unwrap_or_else(|| b.q_grasp.clone());
        let first = linear_joint_motion(&a.q_grasp, &a_mid, step);
        let last = linear_joint_motion(&b_mid, &b.q_grasp, step);
        if !self.carry_valid(grasp, &first) || !self.carry_valid(grasp, &last) {
            return None;
        }
        let mut rng = stream_rng(self.seed, &[6, grasp as u64, class_tag(a.class), class_tag(b.class)]);
        let middle = plan_joint_path(
            self.scenario.master.arm(hand),
            &a_mid,
            &b_mid,
            |q| {
                let tool = self.carried_tool(grasp, q);
                self.valid(hand, q, &other, Some(&tool), &[hand])
            },
            &self.rrt,
            &mut rng,
            deadline,
        )?;
        let mut path = first;
        path.extend(middle.into_iter().skip(1));
        path.extend(last.into_iter().skip(1));
        Some(path)
    }

    fn steps_for(
        &self,
        hand: Hand,
        path: &[JointVector],
        other: &JointVector,
        action: Action,
        tool: impl Fn(&JointVector) -> Pose,
        holds: &[Hold],
    ) -> Vec<TmsStep> {
        path.iter()
            .map(|q| {
                let (left, right) = self.pair(hand, q, other);
                TmsStep {
                    l: 0,
                    tool: tool(q),
                    left,
                    right,
                    action,
                    active: Some(hand),
                    holds: holds.to_vec(),
                }
            })
            .collect()
    }

    fn transfer_steps(&self, grasp: usize, path: &[JointVector]) -> Vec<TmsStep> {
        let hand = self.grasp(grasp).hand;
        let hold = [Hold { hand, grasp }];
        self.steps_for(hand, path, self.home(hand.other()), Action::Transfer, |q| self.carried_tool(grasp, q), &hold)
    }

    /// Initial pick from the home posture.
    pub fn pick_steps(&self, node: &Node) -> Option<Vec<TmsStep>> {
        let (transit, last) = node.approach.as_ref()?;
        let hand = self.grasp(node.grasp).hand;
        let other = self.home(hand.other());
        let tool = node.tool;
        let mut steps = self.steps_for(hand, transit, other, Action::Transit, |_| tool, &[]);
        let mut tail = self.steps_for(hand, &last[1..], other, Action::Regrasp, |_| tool, &[]);
        if let Some(s) = tail.last_mut() {
            s.holds = vec![Hold { hand, grasp: node.grasp }];
        }
        steps.append(&mut tail);
        Some(steps)
    }

    fn regrasp_steps(&self, a: &Node, b: &Node) -> Option<Vec<TmsStep>> {
        let (ta, la) = a.approach.as_ref()?;
        let (tb, lb) = b.approach.as_ref()?;
        let ha = self.grasp(a.grasp).hand;
        let hb = self.grasp(b.grasp).hand;
        let tool = a.tool;
        let rev = |p: &[JointVector]| p.iter().rev().cloned().collect::<Vec<_>>();
        let mut steps = self.steps_for(ha, &rev(la), self.home(ha.other()), Action::Release, |_| tool, &[]);
        steps.extend(self.steps_for(ha, &rev(ta)[1..], self.home(ha.other()), Action::Transit, |_| tool, &[]));
        let mut pick = self.steps_for(hb, &tb[1..], self.home(hb.other()), Action::Transit, |_| tool, &[]);
        pick.extend(self.steps_for(hb, &lb[1..], self.home(hb.other()), Action::Regrasp, |_| tool, &[]));
        if let Some(s) = pick.last_mut() {
            s.holds = vec![Hold { hand: hb, grasp: b.grasp }];
        }
        steps.extend(pick);
        Some(steps)
    }

    /// Handover at the in-air pose from node `a` (giver) to node `b` (taker).
    pub fn handover_steps(&self, a: &Node, b: &Node, deadline: &Deadline) -> Option<Vec<TmsStep>> {
        let ha = self.grasp(a.grasp).hand;
        let hb = self.grasp(b.grasp).hand;
        if ha == hb {
            return None;
        }
        let tool = a.tool;
        let hold_a = Hold { hand: ha, grasp: a.grasp };
        let hold_b = Hold { hand: hb, grasp: b.grasp };
        let tags = [7, a.grasp as u64, b.grasp as u64];
        let (tb, lb) = self.approach(hb, &b.q_pre, &b.q_grasp, &a.q_grasp, &[ha], &tool, &tags, deadline)?;
        let tags = [8, b.grasp as u64, a.grasp as u64];
        let (ta, la) = self.approach(ha, &a.q_pre, &a.q_grasp, &b.q_grasp, &[hb], &tool, &tags, deadline)?;
        let mut steps = self.steps_for(hb, &tb[1..], &a.q_grasp, Action::Transit, |_| tool, &[hold_a]);
        steps.extend(self.steps_for(hb, &lb[1..], &a.q_grasp, Action::HandoverTake, |_| tool, &[hold_a]));
        if let Some(s) = steps.last_mut() {
            s.holds = vec![hold_a, hold_b];
        }
        let rev = |p: &[JointVector]| p.iter().rev().cloned().collect::<Vec<_>>();
        steps.extend(self.steps_for(ha, &rev(&la)[1..], &b.q_grasp, Action::HandoverGive, |_| tool, &[hold_b]));
        steps.extend(self.steps_for(ha, &rev(&ta)[1..], &b.q_grasp, Action::Transit, |_| tool, &[hold_b]));
        Some(steps)
    }

    /// Nodes and edges over every (grasp, tool pose) pair.
    pub fn build_graph(&self, deadline: &Deadline) -> Result<RegraspGraph, TmsError> {
        let classes = self.classes();
        let pairs: Vec<(usize, PoseClass)> = (0..self.scenario.tool.grasps.len())
            .flat_map(|g| classes.iter().map(move |c| (g, *c)))
            .collect();
        let nodes: Vec<Node> = pairs
            .par_iter()
            .filter_map(|(g, c)| self.build_node(*g, *c, deadline))
            .collect();
        if deadline.expired() {
            return Err(TmsError::Timeout);
        }
        if nodes.is_empty() {
            return Err(TmsError::EmptyGraph);
        }
        let mut candidates = Vec::new();
        for i in 0..nodes.len() {
            for j in i + 1..nodes.len() {
                let (a, b) = (&nodes[i], &nodes[j]);
                let kind = if a.grasp == b.grasp {
                    Some(EdgeKind::Transfer)
                } else if a.class == b.class && a.class.on_table() {
                    Some(EdgeKind::Regrasp)
                } else if a.class == b.class && self.grasp(a.grasp).hand != self.grasp(b.grasp).hand {
                    Some(EdgeKind::Handover)
                } else {
                    None
                };
                if let Some(k) = kind {
                    candidates.push((i, j, k));
                }
            }
        }
        let built: Vec<Vec<Edge>> = candidates
            .par_iter()
            .map(|(i, j, kind)| self.edge_pair(&nodes, *i, *j, *kind, deadline))
            .collect();
        if deadline.expired() {
            return Err(TmsError::Timeout);
        }
        let edges: Vec<Edge> = built.into_iter().flatten().collect();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (k, e) in edges.iter().enumerate() {
            adjacency[e.from].push(k);
        }
        Ok(RegraspGraph { nodes, edges, adjacency })
    }

    /// Both directed edges between two nodes, or none when infeasible.
    pub fn edge_pair(&self, nodes: &[Node], i: usize, j: usize, kind: EdgeKind, deadline: &Deadline) -> Vec<Edge> {
        let (a, b) = (&nodes[i], &nodes[j]);
        let make = |from, to, steps: Vec<TmsStep>| Edge {
            from,
            to,
            kind,
            length: steps_length(&steps),
            steps,
        };
        match kind {
            EdgeKind::Transfer => {
                let Some(path) = self.transfer_path(a, b, deadline) else { return vec![] };
                let back: Vec<JointVector> = path.iter().rev().cloned().collect();
                vec![
                    make(i, j, self.transfer_steps(a.grasp, &path)),
                    make(j, i, self.transfer_steps(a.grasp, &back)),
                ]
            }
            EdgeKind::Regrasp => match (self.regrasp_steps(a, b), self.regrasp_steps(b, a)) {
                (Some(ab), Some(ba)) => vec![make(i, j, ab), make(j, i, ba)],
                _ => vec![],
            },
            EdgeKind::Handover => {
                match (self.handover_steps(a, b, deadline), self.handover_steps(b, a, deadline)) {
                    (Some(ab), Some(ba)) => vec![make(i, j, ab), make(j, i, ba)],
                    _ => vec![],
                }
            }
        }
    }

    /// Plans the tool through `goals` in order, starting from the start pose.
    pub fn plan(&self, goals: &[u32], deadline: &Deadline) -> Result<TmsPlan, TmsError> {
        for id in goals {
            if self.scenario.goal(*id).is_none() {
                return Err(TmsError::UnknownGoal(*id));
            }
        }
        let graph = self.build_graph(deadline)?;
        self.plan_on(&graph, goals, deadline)
    }

    pub fn plan_on(&self, graph: &RegraspGraph, goals: &[u32], deadline: &Deadline) -> Result<TmsPlan, TmsError> {
        let n = graph.nodes.len();
        let mut steps: Vec<TmsStep> = Vec::new();
        let mut hops = Vec::new();
        let mut sources: Vec<(usize, (u32, f64))> = Vec::new();
        let mut picks: Vec<Option<Vec<TmsStep>>> = vec![None; n];
        for (k, node) in graph.nodes.iter().enumerate() {
            if node.class == PoseClass::Start {
                if let Some(p) = self.pick_steps(node) {
                    sources.push((k, (0, steps_length(&p))));
                    picks[k] = Some(p);
                }
            }
        }
        let mut first = true;
        for goal in goals {
            if deadline.expired() {
                return Err(TmsError::Timeout);
            }
            let target = PoseClass::Goal(*goal);
            let (end, edges) = shortest_path(graph, &sources, |k| graph.nodes[k].class == target)
                .ok_or(TmsError::NoPath(*goal))?;
            if first {
                let start = edges.first().map_or(end, |e| graph.edges[*e].from);
                let pick = picks[start].clone().expect("sources carry a pick");
                append_steps(&mut steps, pick);
                hops.push(Hop {
                    kind: None,
                    from: None,
                    to: graph.nodes[start].class,
                    grasp: graph.nodes[start].grasp,
                });
                first = false;
            }
            for e in &edges {
                let edge = &graph.edges[*e];
                append_steps(&mut steps, edge.steps.clone());
                hops.push(Hop {
                    kind: Some(edge.kind),
                    from: Some(graph.nodes[edge.from].class),
                    to: graph.nodes[edge.to].class,
                    grasp: graph.nodes[edge.to].grasp,
                });
            }
            sources = vec![(end, (0, 0.0))];
        }
        for (l, s) in steps.iter_mut().enumerate() {
            s.l = l;
        }
        Ok(TmsPlan { steps, hops })
    }
}

fn class_tag(c: PoseClass) -> u64 {
    match c {
        PoseClass::Start => 0,
        PoseClass::Goal(id) => 1000 + id as u64,
        PoseClass::Placement(j) => 2000 + j as u64,
        PoseClass::Handover => 3000,
    }
}

fn append_steps(steps: &mut Vec<TmsStep>, more: Vec<TmsStep>) {
    let mut it = more.into_iter().peekable();
    if let (Some(last), Some(next)) = (steps.last(), it.peek()) {
        if last.left == next.left && last.right == next.right && last.holds == next.holds && last.action == next.action {
            it.next();
        }
    }
    steps.extend(it);
}

/// Lexicographic (hops, joint length) Dijkstra from several sources.
fn shortest_path(
    graph: &RegraspGraph,
    sources: &[(usize, (u32, f64))],
    is_target: impl Fn(usize) -> bool,
) -> Option<(usize, Vec<usize>)> {
    let n = graph.nodes.len();
    let mut cost: Vec<Option<(u32, f64)>> = vec![None; n];
    let mut via: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let better = |a: (u32, f64), b: Option<(u32, f64)>| match b {
        None => true,
        Some(b) => a.0 < b.0 || (a.0 == b.0 && a.1 < b.1 - 1e-12),
    };
    for (s, c) in sources {
        if better(*c, cost[*s]) {
            cost[*s] = Some(*c);
        }
    }
    loop {
        let mut pick: Option<usize> = None;
        for k in 0..n {
            if done[k] {
                continue;
            }
            if let Some(c) = cost[k] {
                if pick.map_or(true, |p| better(c, cost[p])) {
                    pick = Some(k);
                }
            }
        }
        let u = pick?;
        done[u] = true;
        if is_target(u) {
            let mut edges = Vec::new();
            let mut k = u;
            while let Some(e) = via[k] {
                edges.push(e);
                k = graph.edges[e].from;
            }
            edges.reverse();
            return Some((u, edges));
        }
        let cu = cost[u].expect("picked node has a cost");
        for (e_id, e) in graph.adjacency[u].iter().map(|e| (*e, &graph.edges[*e])) {
            let c = (cu.0 + 1, cu.1 + e.length);
            if !done[e.to] && better(c, cost[e.to]) {
                cost[e.to] = Some(c);
                via[e.to] = Some(e_id);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hop {
    /// `None` for the initial pick.
    pub kind: Option<EdgeKind>,
    pub from: Option<PoseClass>,
    pub to: PoseClass,
    pub grasp: usize,
}

#[derive(Debug, Clone)]
pub struct TmsPlan {
    pub steps: Vec<TmsStep>,
    pub hops: Vec<Hop>,
}

impl TmsPlan {
    pub fn count(&self, kind: EdgeKind) -> usize {
        self.hops.iter().filter(|h| h.kind == Some(kind)).count()
    }
}

/// Rest position of the slider when no assistant is present: seated on the
/// straight cable just below the source.
pub fn rest_slider(t: &Vec3, h: &Vec3, height: f64) -> SliderState {
    let d = h - t;
    let len = d.norm();
    let dir = if len > 1e-9 { d / len } else { Vec3::z() };
    let gap = 0.05f64.min(len * 0.25);
    let bottom_dist = (len - gap - height).max(0.0);
    SliderState::with_axis(t + dir * bottom_dist, dir, height.min(len - bottom_dist).max(1e-6))
}

/// Per-step cable collision events of a master-only plan, slider at rest.
pub fn cable_audit(scenario: &Scenario, steps: &[TmsStep]) -> Vec<Vec<CollisionEvent>> {
    let world = World::new(scenario);
    let check = CableCheck {
        cable_radius: scenario.gadget.cable_radius,
        clearance: scenario.params.clearance,
    };
    let h = scenario.anchors.h;
    steps
        .par_iter()
        .map(|s| {
            let t = scenario.anchors.cable_frame(&s.tool).translation.vector;
            let slider = rest_slider(&t, &h, scenario.gadget.slider_height);
            let cable = CableState::new(t, &slider, h);
            let arms = world.master_arms(&s.left, &s.right);
            let scene = world.cable_scene(&arms, None);
            let zones: Vec<_> = s
                .contact_hands()
                .into_iter()
                .map(|hand| scene.master_zone(hand, t, scenario.params.exclusion_radius))
                .collect();
            cable_collision_events(&cable, &scene.bodies, &zones, &check)
        })
        .collect()
}
