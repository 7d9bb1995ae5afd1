//! Assistant motion sequence: for every master step the assistant places the
//! cable slider at one of a fixed set of offsets around the tool cable axis,
//! preferring the offset used on the previous step. Two policies complete the
//! plan: holding the cable with the free hand while the master lets go of the
//! tool (balancer), and keeping the paid-out cable length in step with the
//! taut length (pulley).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cable::{
    bend_angle_slider, bend_angle_tool, cable_is_clear, pulley_adjust, CableCheck, CableState, ExclusionZone,
    GadgetKind, PulleyCommand, SliderState,
};
use crate::geometry::{interpolate_pose, pose, rotation_distance, Capsule, Pose, Rotation, Vec3};
use crate::kinematics::{linear_joint_motion, solve_ik, Hand, IkConfig, JointVector};
use crate::rrt::{plan_joint_path, RrtConfig};
use crate::scenario::Scenario;
use crate::tms::{Action, TmsStep};
use crate::util::{stream_rng, Deadline};
use crate::world::{CableScene, DualArm, World, SLIDER_RADIUS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Distance from the tool attach point to the slider bottom, meters.
    pub omega: f64,
    pub theta_deg: Vec<f64>,
    pub gamma_deg: Vec<f64>,
    /// Adds the offset straight along the tool z axis as index 0.
    pub include_base_case: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            omega: 0.325,
            theta_deg: vec![30.0, 60.0],
            gamma_deg: vec![0.0, 60.0, 120.0, 180.0, 240.0, 300.0],
            include_base_case: true,
        }
    }
}

impl SamplingConfig {
    pub fn candidate_count(&self) -> usize {
        usize::from(self.include_base_case) + self.theta_deg.len() * self.gamma_deg.len()
    }

    /// `(theta, gamma)` in degrees, in candidate index order.
    pub fn angles(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.candidate_count());
        if self.include_base_case {
            out.push((0.0, 0.0));
        }
        for th in &self.theta_deg {
            for g in &self.gamma_deg {
                out.push((*th, *g));
            }
        }
        out
    }
}

/// Slider offset from the tool attach point: polar angle `theta` from the
/// tool z axis and azimuth `gamma` about it, scaled to `omega`.
pub fn sample_lambda(theta_deg: f64, gamma_deg: f64, tool_rot: &Rotation, omega: f64) -> Vec3 {
    let (th, ga) = (theta_deg.to_radians(), gamma_deg.to_radians());
    let local = Vec3::new(th.sin() * ga.cos(), th.sin() * ga.sin(), th.cos());
    tool_rot * local * omega
}

/// Candidate slider bottom positions for a tool cable frame (origin at the
/// attach point, z along the attach normal).
pub fn candidate_positions(cable_frame: &Pose, cfg: &SamplingConfig) -> Vec<(usize, Vec3)> {
    let t = cable_frame.translation.vector;
    cfg.angles()
        .into_iter()
        .enumerate()
        .map(|(i, (th, ga))| (i, t + sample_lambda(th, ga, &cable_frame.rotation, cfg.omega)))
        .collect()
}

/// Search order starting at `i_last`: `i_last, +1, -1, +2, -2, ...`, skipping
/// indices outside `0..n`. An `i_last` past the end starts from `n - 1`.
pub fn nexti_order(i_last: usize, n: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let i_last = i_last.min(n - 1);
    let mut out = Vec::with_capacity(n);
    out.push(i_last);
    let last = i_last as i64;
    for k in 1..=n as i64 {
        for c in [last + k, last - k] {
            if (0..n as i64).contains(&c) {
                out.push(c as usize);
            }
        }
    }
    out
}

/// Index following `current` in the order from `i_last`; the first index
/// when `current` is `None`, and `None` once every index was visited.
pub fn nexti(i_last: usize, current: Option<usize>, n: usize) -> Option<usize> {
    let order = nexti_order(i_last, n);
    match current {
        None => order.first().copied(),
        Some(c) => {
            let pos = order.iter().position(|x| *x == c)?;
            order.get(pos + 1).copied()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reject {
    IkFail,
    CableCollision,
    BendLimit,
    BodyCollision,
    DistanceMargin,
    Stitch,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectTally {
    pub ik_fail: usize,
    pub cable_collision: usize,
    pub bend_limit: usize,
    pub body_collision: usize,
    pub distance_margin: usize,
    pub stitch: usize,
}

impl RejectTally {
    pub fn add(&mut self, r: Reject) {
        match r {
            Reject::IkFail => self.ik_fail += 1,
            Reject::CableCollision => self.cable_collision += 1,
            Reject::BendLimit => self.bend_limit += 1,
            Reject::BodyCollision => self.body_collision += 1,
            Reject::DistanceMargin => self.distance_margin += 1,
            Reject::Stitch => self.stitch += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CableHold {
    pub hand: Hand,
    /// Grab parameter along the source-side cable, 0 at the slider top.
    pub u: f64,
    pub grab_point: Vec3,
    pub joints: JointVector,
    /// Free-hand motion executed before this step (first step of a hold).
    pub approach: Vec<JointVector>,
    /// Free-hand motion executed after this step (last step of a hold).
    pub retreat: Vec<JointVector>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulleyRecord {
    pub command: PulleyCommand,
    pub required: f64,
    /// Paid-out length after the command.
    pub outside_length: f64,
}

/// Intermediate assistant configuration connecting step `l-1` to step `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmsSubstep {
    pub left: JointVector,
    pub right: JointVector,
    pub slider: SliderState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmsStep {
    pub l: usize,
    pub left: JointVector,
    pub right: JointVector,
    pub candidate: usize,
    /// Previous configuration held because no candidate was feasible.
    pub reused: bool,
    pub slider: SliderState,
    pub pulley: Option<PulleyRecord>,
    pub cable_hold: Option<CableHold>,
    pub substeps: Vec<AmsSubstep>,
}

impl AmsStep {
    pub fn joints(&self, hand: Hand) -> &JointVector {
        match hand {
            Hand::Left => &self.left,
            Hand::Right => &self.right,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AmsPlan {
    pub steps: Vec<AmsStep>,
    pub slider_hand: Hand,
    pub slider_grasp: usize,
    pub rejects: RejectTally,
    /// Slider grasps abandoned before the successful one.
    pub grasp_restarts: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AmsError {
    #[error("every slider grasp failed; furthest attempt stopped at step {last_step}")]
    Exhausted { last_step: usize },
    #[error("planning budget exceeded")]
    Timeout,
    #[error("no feasible cable grab point for the hold starting at step {0}")]
    NoGrabPoint(usize),
    #[error("no collision-free free-hand motion for the hold starting at step {0}")]
    RrtFail(usize),
}

/// Geometry of one master step shared by every assistant query.
struct StepScene {
    t: Vec3,
    frame: Pose,
    master: DualArm,
    tool: Capsule,
    contact: Vec<Hand>,
}

/// Assistant configuration under test.
struct Candidate<'q> {
    slider_q: &'q JointVector,
    free_q: &'q JointVector,
    slider: SliderState,
    grab: Option<Vec3>,
}

pub struct AmsPlanner<'a> {
    pub scenario: &'a Scenario,
    pub world: World<'a>,
    pub ik: IkConfig,
    pub seed: u64,
    steps: &'a [TmsStep],
    scenes: Vec<StepScene>,
    check: CableCheck,
}

const MAX_STITCH_JUMP: f64 = 0.5;
const MARGIN_LOW: f64 = 0.9;
const MARGIN_HIGH: f64 = 1.1;

impl<'a> AmsPlanner<'a> {
    pub fn new(scenario: &'a Scenario, steps: &'a [TmsStep], seed: u64) -> AmsPlanner<'a> {
        let world = World::new(scenario);
        let scenes = steps
            .iter()
            .map(|s| {
                let frame = scenario.anchors.cable_frame(&s.tool);
                StepScene {
                    t: frame.translation.vector,
                    frame,
                    master: world.master_arms(&s.left, &s.right),
                    tool: scenario.tool.body_at(&s.tool),
                    contact: s.contact_hands(),
                }
            })
            .collect();
        AmsPlanner {
            scenario,
            world,
            ik: IkConfig::default(),
            seed,
            steps,
            scenes,
            check: CableCheck {
                cable_radius: scenario.gadget.cable_radius,
                clearance: scenario.params.clearance,
            },
        }
    }

    fn home(&self, hand: Hand) -> &JointVector {
        self.scenario.assistant.home(hand)
    }

    fn gripper(&self, hand: Hand, q: &JointVector) -> Pose {
        self.scenario
            .assistant
            .arm(hand)
            .gripper_pose(q)
            .expect("joint vector length checked at load")
    }

    fn arms(&self, slider_hand: Hand, slider_q: &JointVector, free_q: &JointVector) -> DualArm {
        match slider_hand {
            Hand::Left => self.world.assistant_arms(slider_q, free_q),
            Hand::Right => self.world.assistant_arms(free_q, slider_q),
        }
    }

    fn slider_capsule(&self, slider: &SliderState) -> Capsule {
        Capsule::new(slider.s, slider.top(), SLIDER_RADIUS)
    }

    /// Slider state carried by a gripper pose with slider grasp `grasp`.
    fn slider_from_gripper(&self, gripper: &Pose, grasp: &Pose) -> SliderState {
        let p = gripper * grasp.inverse();
        let z = p.rotation * Vec3::z();
        let height = self.scenario.gadget.slider_height;
        SliderState {
            s: p.translation.vector - z * (height * 0.5),
            b: z * height,
            frame: p.rotation,
        }
    }

    fn zones(&self, scene: &CableScene, l: usize, slider_hand: Hand, slider: &SliderState, grab: Option<Vec3>) -> Vec<ExclusionZone> {
        let r = self.scenario.params.exclusion_radius;
        let st = &self.scenes[l];
        let mut zones: Vec<ExclusionZone> = st.contact.iter().map(|h| scene.master_zone(*h, st.t, r)).collect();
        zones.push(scene.assistant_zone(slider_hand, slider.center(), r));
        if let Some(p) = grab {
            zones.push(scene.assistant_zone(slider_hand.other(), p, r));
        }
        zones
    }

    fn bends_ok(&self, l: usize, slider: &SliderState) -> Result<(), Reject> {
        let st = &self.scenes[l];
        let cable = CableState::new(st.t, slider, self.scenario.anchors.h);
        let tool = bend_angle_tool(&cable.mu_ts, &st.frame.rotation).map_err(|_| Reject::BendLimit)?;
        let at_slider = bend_angle_slider(&cable.mu_sp, &slider.frame).map_err(|_| Reject::BendLimit)?;
        if tool < 90.0 && at_slider < 90.0 {
            Ok(())
        } else {
            Err(Reject::BendLimit)
        }
    }

    fn margin_ok(&self, l: usize, slider: &SliderState) -> Result<(), Reject> {
        let d = (slider.s - self.scenes[l].t).norm();
        let w = self.scenario.params.sampling.omega;
        if d >= MARGIN_LOW * w - 1e-12 && d <= MARGIN_HIGH * w + 1e-12 {
            Ok(())
        } else {
            Err(Reject::DistanceMargin)
        }
    }

    /// Body and cable checks for a full assistant configuration at step `l`.
    fn configuration_ok(&self, l: usize, slider_hand: Hand, c: &Candidate) -> Result<(), Reject> {
        let st = &self.scenes[l];
        let arms = self.arms(slider_hand, c.slider_q, c.free_q);
        let slider_cap = self.slider_capsule(&c.slider);
        if !self
            .world
            .assistant_clear(&arms, &st.master, &st.tool, Some((&slider_cap, slider_hand)))
        {
            return Err(Reject::BodyCollision);
        }
        let scene = self.world.cable_scene(&st.master, Some(&arms));
        let zones = self.zones(&scene, l, slider_hand, &c.slider, c.grab);
        let cable = CableState::new(st.t, &c.slider, self.scenario.anchors.h);
        if cable_is_clear(&cable, &scene.bodies, &zones, &self.check) {
            Ok(())
        } else {
            Err(Reject::CableCollision)
        }
    }

    /// Cable against everything but the assistant arms; no IK needed.
    fn static_cable_ok(&self, l: usize, slider_hand: Hand, slider: &SliderState) -> Result<(), Reject> {
        let st = &self.scenes[l];
        let scene = self.world.cable_scene(&st.master, None);
        let zones = self.zones(&scene, l, slider_hand, slider, None);
        let mut bodies = scene.bodies.clone();
        for (name, obb) in &self.scenario.assistant.body {
            bodies.push(crate::cable::Body::new(name.clone(), crate::geometry::Shape::Obb(*obb)));
        }
        let cable = CableState::new(st.t, slider, self.scenario.anchors.h);
        if cable_is_clear(&cable, &bodies, &zones, &self.check) {
            Ok(())
        } else {
            Err(Reject::CableCollision)
        }
    }

    /// Places the slider bottom at `s` and solves the assistant IK.
    pub fn check_constraints(
        &self,
        l: usize,
        s: Vec3,
        slider_hand: Hand,
        grasp: &Pose,
        seed: &JointVector,
        free_q: &JointVector,
        tags: &[u64],
    ) -> Result<(JointVector, SliderState), Reject> {
        let st = &self.scenes[l];
        let slider = SliderState::on_cable(s, st.t, self.scenario.gadget.slider_height);
        self.margin_ok(l, &slider)?;
        self.bends_ok(l, &slider)?;
        self.static_cable_ok(l, slider_hand, &slider)?;
        let target = slider.pose() * grasp;
        let mut rng = stream_rng(self.seed, tags);
        let q = solve_ik(self.scenario.assistant.arm(slider_hand), &target, seed, &self.ik, &mut rng)
            .map_err(|_| Reject::IkFail)?;
        let c = Candidate {
            slider_q: &q,
            free_q,
            slider,
            grab: None,
        };
        self.configuration_ok(l, slider_hand, &c)?;
        Ok((q, slider))
    }

    /// Whether holding the previous configuration keeps every constraint at step `l`.
    pub fn is_reusable(&self, prev: &AmsStep, l: usize, slider_hand: Hand) -> bool {
        let c = Candidate {
            slider_q: prev.joints(slider_hand),
            free_q: prev.joints(slider_hand.other()),
            slider: prev.slider,
            grab: None,
        };
        self.margin_ok(l, &prev.slider).is_ok()
            && self.bends_ok(l, &prev.slider).is_ok()
            && self.configuration_ok(l, slider_hand, &c).is_ok()
    }

    /// Gripper-pose interpolation from the previous configuration to `q1`,
    /// every intermediate configuration validated against step `l`.
    fn stitch(
        &self,
        l: usize,
        slider_hand: Hand,
        grasp: &Pose,
        q0: &JointVector,
        q1: &JointVector,
        free_q: &JointVector,
    ) -> Result<Vec<AmsSubstep>, Reject> {
        let p = &self.scenario.params;
        let arm = self.scenario.assistant.arm(slider_hand);
        let g0 = self.gripper(slider_hand, q0);
        let g1 = self.gripper(slider_hand, q1);
        let dist = (g1.translation.vector - g0.translation.vector).norm();
        let ang = rotation_distance(&g0.rotation, &g1.rotation);
        let n = ((dist / p.stitch_translation).ceil().max((ang / p.stitch_rotation).ceil()) as usize).max(1);
        let cfg = IkConfig { restarts: 0, ..self.ik };
        let mut rng = stream_rng(self.seed, &[20, l as u64]);
        let mut keys = Vec::with_capacity(n + 1);
        keys.push(q0.clone());
        for k in 1..n {
            let target = interpolate_pose(&g0, &g1, k as f64 / n as f64);
            let prev = keys.last().expect("seeded with q0");
            let q = solve_ik(arm, &target, prev, &cfg, &mut rng).map_err(|_| Reject::Stitch)?;
            keys.push(q);
        }
        keys.push(q1.clone());
        let mut out = Vec::new();
        for w in keys.windows(2) {
            if w[0].max_delta(&w[1]) > MAX_STITCH_JUMP {
                return Err(Reject::Stitch);
            }
            for q in linear_joint_motion(&w[0], &w[1], p.joint_step).into_iter().skip(1) {
                if &q == q1 {
                    continue;
                }
                let slider = self.slider_from_gripper(&self.gripper(slider_hand, &q), grasp);
                self.bends_ok(l, &slider)?;
                let c = Candidate {
                    slider_q: &q,
                    free_q,
                    slider,
                    grab: None,
                };
                self.configuration_ok(l, slider_hand, &c)?;
                let (left, right) = match slider_hand {
                    Hand::Left => (q, free_q.clone()),
                    Hand::Right => (free_q.clone(), q),
                };
                out.push(AmsSubstep { left, right, slider });
            }
        }
        Ok(out)
    }

    fn candidate_order(&self) -> usize {
        self.scenario.params.sampling.candidate_count()
    }

    /// One pass of the candidate search with a fixed slider grasp.
    fn pass(
        &self,
        slider_hand: Hand,
        grasp_index: usize,
        tally: &mut RejectTally,
        deadline: &Deadline,
    ) -> Result<Result<Vec<AmsStep>, usize>, AmsError> {
        let grasp = self.scenario.slider_grasps[grasp_index];
        let free_q = self.home(slider_hand.other()).clone();
        let n = self.candidate_order();
        let mut out: Vec<AmsStep> = Vec::with_capacity(self.steps.len());
        let mut i_last = 0usize;
        let holds: Vec<(usize, usize)> = match self.scenario.gadget.kind {
            GadgetKind::Balancer => release_intervals(self.steps),
            GadgetKind::Pulley { .. } => Vec::new(),
        };
        let mut locked_until = None;
        for l in 0..self.steps.len() {
            if deadline.expired() {
                return Err(AmsError::Timeout);
            }
            if let (Some(end), Some(prev)) = (locked_until, out.last()) {
                if l <= end {
                    out.push(AmsStep {
                        l,
                        substeps: Vec::new(),
                        ..prev.clone()
                    });
                    continue;
                }
                locked_until = None;
            }
            let hold_end = holds.iter().find(|(a, _)| *a == l).map(|(_, b)| *b);
            let cands = candidate_positions(&self.scenes[l].frame, &self.scenario.params.sampling);
            let seed = out.last().map_or_else(|| self.home(slider_hand).clone(), |p| p.joints(slider_hand).clone());
            let mut found = None;
            let mut current = None;
            while let Some(i) = nexti(i_last, current, n) {
                current = Some(i);
                let tags = [10, slider_hand as u64, grasp_index as u64, l as u64, i as u64];
                let attempt = self
                    .check_constraints(l, cands[i].1, slider_hand, &grasp, &seed, &free_q, &tags)
                    .and_then(|(q, slider)| {
                        let subs = match out.last() {
                            Some(prev) => self.stitch(l, slider_hand, &grasp, prev.joints(slider_hand), &q, &free_q)?,
                            None => Vec::new(),
                        };
                        Ok((q, slider, subs))
                    })
                    .and_then(|(q, slider, subs)| {
                        // The slider stays put while the tool rests on the table.
                        if let Some(end) = hold_end {
                            let c = Candidate {
                                slider_q: &q,
                                free_q: &free_q,
                                slider,
                                grab: None,
                            };
                            for k in l + 1..=end {
                                self.configuration_ok(k, slider_hand, &c)?;
                            }
                        }
                        Ok((q, slider, subs))
                    });
                match attempt {
                    Ok(v) => {
                        found = Some((i, v));
                        break;
                    }
                    Err(r) => tally.add(r),
                }
            }
            let step = match found {
                Some((i, (q, slider, substeps))) => {
                    i_last = i;
                    locked_until = hold_end;
                    let (left, right) = match slider_hand {
                        Hand::Left => (q, free_q.clone()),
                        Hand::Right => (free_q.clone(), q),
                    };
                    AmsStep {
                        l,
                        left,
                        right,
                        candidate: i,
                        reused: false,
                        slider,
                        pulley: None,
                        cable_hold: None,
                        substeps,
                    }
                }
                None => match out.last() {
                    Some(prev) if self.is_reusable(prev, l, slider_hand) => AmsStep {
                        l,
                        reused: true,
                        substeps: Vec::new(),
                        ..prev.clone()
                    },
                    _ => return Ok(Err(l)),
                },
            };
            out.push(step);
        }
        Ok(Ok(out))
    }

    /// Candidate search over slider grasps, then the gadget policies.
    pub fn plan(&self, deadline: &Deadline) -> Result<AmsPlan, AmsError> {
        let first = self.scenario.params.slider_hand;
        let mut tally = RejectTally::default();
        let mut restarts = 0;
        let mut last_step = 0;
        let mut policy_error = None;
        for hand in [first, first.other()] {
            for g in 0..self.scenario.slider_grasps.len() {
                match self.pass(hand, g, &mut tally, deadline)? {
                    Ok(mut steps) => {
                        match self.apply_policies(&mut steps, hand, deadline) {
                            Ok(()) => {
                                return Ok(AmsPlan {
                                    steps,
                                    slider_hand: hand,
                                    slider_grasp: g,
                                    rejects: tally,
                                    grasp_restarts: restarts,
                                })
                            }
                            Err(AmsError::Timeout) => return Err(AmsError::Timeout),
                            Err(e) => {
                                log::debug!("slider grasp {g} ({hand}) rejected by policy: {e}");
                                policy_error = Some(e);
                            }
                        }
                    }
                    Err(l) => {
                        log::debug!("slider grasp {g} ({hand}) failed at step {l}");
                        last_step = last_step.max(l);
                    }
                }
                restarts += 1;
            }
        }
        Err(policy_error.unwrap_or(AmsError::Exhausted { last_step }))
    }

    fn apply_policies(&self, steps: &mut [AmsStep], slider_hand: Hand, deadline: &Deadline) -> Result<(), AmsError> {
        match self.scenario.gadget.kind {
            GadgetKind::Balancer => {
                for (start, end) in release_intervals(self.steps) {
                    self.plan_cable_hold(steps, slider_hand, start, end, deadline)?;
                }
                Ok(())
            }
            GadgetKind::Pulley {
                outside_length,
                threshold,
            } => {
                attach_pulley_commands(steps, self.steps, self.scenario, outside_length, threshold);
                Ok(())
            }
        }
    }

    fn hold_target(&self, hand: Hand, point: &Vec3, along: &Vec3) -> Pose {
        let shoulder = self.scenario.assistant.arm(hand).shoulder();
        let y = along.normalize();
        let mut z = point - shoulder;
        z -= y * z.dot(&y);
        let z = if z.norm() > 1e-9 { z.normalize() } else { y.cross(&Vec3::z()).normalize() };
        let x = y.cross(&z);
        let m = nalgebra::Matrix3::from_columns(&[x, y, z]);
        pose(*point, Rotation::from_matrix(&m))
    }

    fn hold_valid_at(&self, l: usize, steps: &[AmsStep], slider_hand: Hand, free_q: &JointVector, grab: Vec3) -> bool {
        let s = &steps[l];
        let main = Candidate {
            slider_q: s.joints(slider_hand),
            free_q,
            slider: s.slider,
            grab: Some(grab),
        };
        if self.configuration_ok(l, slider_hand, &main).is_err() {
            return false;
        }
        s.substeps.iter().all(|sub| {
            let c = Candidate {
                slider_q: match slider_hand {
                    Hand::Left => &sub.left,
                    Hand::Right => &sub.right,
                },
                free_q,
                slider: sub.slider,
                grab: Some(grab),
            };
            self.configuration_ok(l, slider_hand, &c).is_ok()
        })
    }

    /// Free-hand cable hold over master steps `start..=end`.
    pub fn plan_cable_hold(
        &self,
        steps: &mut [AmsStep],
        slider_hand: Hand,
        start: usize,
        end: usize,
        deadline: &Deadline,
    ) -> Result<(), AmsError> {
        let free = slider_hand.other();
        let h = self.scenario.anchors.h;
        let cable = CableState::new(self.scenes[start].t, &steps[start].slider, h);
        let slider0 = steps[start].slider;
        if (start..=end).any(|l| (steps[l].slider.s - slider0.s).norm() > 1e-9 || !steps[l].substeps.is_empty() && l > start) {
            return Err(AmsError::NoGrabPoint(start));
        }
        let mut us: Vec<f64> = self.scenario.params.hold_fractions.clone();
        let scan: Vec<f64> = (1..20)
            .map(|k| k as f64 * 0.05)
            .filter(|u| !us.iter().any(|x| (x - u).abs() < 1e-9))
            .collect();
        us.extend(scan);
        let along = cable.source_segment().b - cable.source_segment().a;
        let arm = self.scenario.assistant.arm(free);
        let rrt = RrtConfig {
            resolution: self.scenario.params.joint_step,
            ..RrtConfig::default()
        };
        let mut any_ik = false;
        for (k, u) in us.iter().enumerate() {
            if deadline.expired() {
                return Err(AmsError::Timeout);
            }
            let grab = cable.source_point(*u);
            let target = self.hold_target(free, &grab, &along);
            let mut rng = stream_rng(self.seed, &[30, start as u64, k as u64]);
            let Ok(q) = solve_ik(arm, &target, self.home(free), &self.ik, &mut rng) else {
                log::trace!("hold u={u:.2}: ik failed");
                continue;
            };
            if let Some(bad) = (start..=end).find(|&l| !self.hold_valid_at(l, steps, slider_hand, &q, grab)) {
                log::trace!("hold u={u:.2}: invalid at step {bad}");
                continue;
            }
            any_ik = true;
            let before = start.saturating_sub(1);
            let approach = plan_joint_path(
                arm,
                self.home(free),
                &q,
                |c| self.free_motion_ok(before, steps, slider_hand, c, grab),
                &rrt,
                &mut rng,
                deadline,
            );
            let retreat = plan_joint_path(
                arm,
                &q,
                self.home(free),
                |c| self.free_motion_ok(end, steps, slider_hand, c, grab),
                &rrt,
                &mut rng,
                deadline,
            );
            let (Some(approach), Some(retreat)) = (approach, retreat) else { continue };
            for l in start..=end {
                let s = &mut steps[l];
                match free {
                    Hand::Left => s.left = q.clone(),
                    Hand::Right => s.right = q.clone(),
                }
                s.cable_hold = Some(CableHold {
                    hand: free,
                    u: *u,
                    grab_point: grab,
                    joints: q.clone(),
                    approach: if l == start { approach.clone() } else { Vec::new() },
                    retreat: if l == end { retreat.clone() } else { Vec::new() },
                });
            }
            return Ok(());
        }
        Err(if any_ik {
            AmsError::RrtFail(start)
        } else {
            AmsError::NoGrabPoint(start)
        })
    }

    fn free_motion_ok(&self, l: usize, steps: &[AmsStep], slider_hand: Hand, free_q: &JointVector, grab: Vec3) -> bool {
        let s = &steps[l];
        let c = Candidate {
            slider_q: s.joints(slider_hand),
            free_q,
            slider: s.slider,
            grab: Some(grab),
        };
        self.configuration_ok(l, slider_hand, &c).is_ok()
    }
}

/// Master steps from each release until the next grasp closes, inclusive.
pub fn release_intervals(steps: &[TmsStep]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (l, s) in steps.iter().enumerate() {
        match open {
            None if s.action == Action::Release && s.holds.is_empty() => open = Some(l),
            Some(start) if !s.holds.is_empty() => {
                out.push((start, l));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        out.push((start, steps.len() - 1));
    }
    out
}

/// Records a pulley command on every step, bringing the paid-out length
/// within `threshold` of the taut length before the step's motion.
pub fn attach_pulley_commands(
    ams: &mut [AmsStep],
    tms: &[TmsStep],
    scenario: &Scenario,
    outside_length: Option<f64>,
    threshold: f64,
) {
    let h = scenario.anchors.h;
    let mut length = None;
    for (a, m) in ams.iter_mut().zip(tms) {
        let t = scenario.anchors.cable_frame(&m.tool).translation.vector;
        let required = crate::cable::required_cable_length(&CableState::new(t, &a.slider, h));
        let current = *length.get_or_insert(outside_length.unwrap_or(required));
        let command = pulley_adjust(current, required, threshold);
        let after = command.apply(current);
        length = Some(after);
        a.pulley = Some(PulleyRecord {
            command,
            required,
            outside_length: after,
        });
    }
}
