//! Serial-arm forward kinematics, damped least-squares inverse kinematics,
//! and joint-space interpolation.

use std::fmt;
use std::ops::Deref;

use nalgebra::{Matrix6, SMatrix, Unit, Vector6};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{pose, transform_point, Capsule, Obb, Pose, Rotation, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("joint vector has {got} entries, arm `{arm}` has {expected} joints")]
    LengthMismatch {
        arm: String,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IkError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("target is {distance:.3} m from the shoulder, reach is {reach:.3} m")]
    Unreachable { distance: f64, reach: f64 },
    #[error("no convergence after {attempts} attempts")]
    NoConvergence { attempts: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub fn other(self) -> Hand {
        match self {
            Hand::Left => Hand::Right,
            Hand::Right => Hand::Left,
        }
    }
}

impl fmt::Display for Hand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hand::Left => "left",
            Hand::Right => "right",
        })
    }
}

/// Joint configuration in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointVector(pub Vec<f64>);

impl Deref for JointVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for JointVector {
    fn from(v: Vec<f64>) -> Self {
        JointVector(v)
    }
}

impl JointVector {
    pub fn zeros(n: usize) -> Self {
        JointVector(vec![0.0; n])
    }

    /// Largest per-joint absolute difference.
    pub fn max_delta(&self, other: &JointVector) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn distance(&self, other: &JointVector) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn lerp(&self, other: &JointVector, u: f64) -> JointVector {
        JointVector(
            self.iter()
                .zip(other.iter())
                .map(|(a, b)| a + (b - a) * u)
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    /// Fixed transform from the parent frame to this joint's frame at zero angle.
    pub origin: Pose,
    pub axis: Unit<Vec3>,
    pub lower: f64,
    pub upper: f64,
}

/// Collision capsule fixed in the frame of joint `joint` (after its rotation).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkCapsule {
    pub joint: usize,
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    pub name: String,
    /// World pose of the arm mount.
    pub base: Pose,
    pub joints: Vec<Joint>,
    pub links: Vec<LinkCapsule>,
    /// Flange (last joint frame) to gripper center point.
    pub tool: Pose,
}

#[derive(Debug, Clone)]
pub struct FkResult {
    pub gripper: Pose,
    pub capsules: Vec<Capsule>,
}

impl ArmModel {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    fn check_len(&self, q: &[f64]) -> Result<(), KinematicsError> {
        if q.len() != self.joints.len() {
            return Err(KinematicsError::LengthMismatch {
                arm: self.name.clone(),
                expected: self.joints.len(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// World frames of every joint after applying `q`.
    pub fn joint_frames(&self, q: &[f64]) -> Result<Vec<Pose>, KinematicsError> {
        self.check_len(q)?;
        let mut frames = Vec::with_capacity(self.joints.len());
        let mut current = self.base;
        for (joint, angle) in self.joints.iter().zip(q) {
            current = current * joint.origin * Rotation::from_axis_angle(&joint.axis, *angle);
            frames.push(current);
        }
        Ok(frames)
    }

    pub fn gripper_pose(&self, q: &[f64]) -> Result<Pose, KinematicsError> {
        let frames = self.joint_frames(q)?;
        Ok(*frames.last().unwrap_or(&self.base) * self.tool)
    }

    /// Position of the first joint, the center of the reachable sphere.
    pub fn shoulder(&self) -> Vec3 {
        (self.base * self.joints[0].origin).translation.vector
    }

    /// Upper bound on the shoulder-to-gripper distance.
    pub fn reach(&self) -> f64 {
        self.joints
            .iter()
            .skip(1)
            .map(|j| j.origin.translation.vector.norm())
            .sum::<f64>()
            + self.tool.translation.vector.norm()
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.joints.len()
            && self
                .joints
                .iter()
                .zip(q)
                .all(|(j, a)| *a >= j.lower - 1e-12 && *a <= j.upper + 1e-12)
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (j, a) in self.joints.iter().zip(q.iter_mut()) {
            *a = a.clamp(j.lower, j.upper);
        }
    }

    pub fn random_configuration<R: Rng + ?Sized>(&self, rng: &mut R) -> JointVector {
        JointVector(
            self.joints
                .iter()
                .map(|j| rng.gen_range(j.lower..=j.upper))
                .collect(),
        )
    }
}

pub fn forward_kinematics(arm: &ArmModel, q: &JointVector) -> Result<FkResult, KinematicsError> {
    let frames = arm.joint_frames(q)?;
    let gripper = *frames.last().unwrap_or(&arm.base) * arm.tool;
    let capsules = arm
        .links
        .iter()
        .map(|l| {
            let f = &frames[l.joint];
            Capsule::new(transform_point(f, &l.a), transform_point(f, &l.b), l.radius)
        })
        .collect();
    Ok(FkResult { gripper, capsules })
}

/// Position and orientation error of `current` relative to `target`.
pub fn pose_error(target: &Pose, current: &Pose) -> (f64, f64) {
    (
        (target.translation.vector - current.translation.vector).norm(),
        current.rotation.angle_to(&target.rotation),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkConfig {
    pub damping: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    pub tol_pos: f64,
    pub tol_rot: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            damping: 0.05,
            max_iterations: 300,
            restarts: 20,
            tol_pos: 1e-3,
            tol_rot: 1e-2,
        }
    }
}

const MAX_POS_STEP: f64 = 0.1;
const MAX_ROT_STEP: f64 = 0.4;

fn twist_error(target: &Pose, current: &Pose) -> Vector6<f64> {
    let mut dp = target.translation.vector - current.translation.vector;
    let mut dr = (target.rotation * current.rotation.inverse()).scaled_axis();
    let np = dp.norm();
    if np > MAX_POS_STEP {
        dp *= MAX_POS_STEP / np;
    }
    let nr = dr.norm();
    if nr > MAX_ROT_STEP {
        dr *= MAX_ROT_STEP / nr;
    }
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

fn dls_descent(arm: &ArmModel, target: &Pose, mut q: Vec<f64>, cfg: &IkConfig) -> Option<Vec<f64>> {
    let n = q.len();
    let damping2 = cfg.damping * cfg.damping;
    for _ in 0..cfg.max_iterations {
        let frames = arm.joint_frames(&q).ok()?;
        let ee = *frames.last()? * arm.tool;
        let (ep, er) = pose_error(target, &ee);
        if ep <= cfg.tol_pos && er <= cfg.tol_rot {
            return Some(q);
        }
        let p_e = ee.translation.vector;
        let mut jac = SMatrix::<f64, 6, 16>::zeros();
        for (i, (frame, joint)) in frames.iter().zip(&arm.joints).enumerate() {
            let z = frame.rotation * joint.axis.into_inner();
            let lin = z.cross(&(p_e - frame.translation.vector));
            jac.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            jac.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
        }
        let e = twist_error(target, &ee);
        let jjt: Matrix6<f64> = jac * jac.transpose() + Matrix6::identity() * damping2;
        let y = jjt.cholesky()?.solve(&e);
        let dq = jac.transpose() * y;
        for i in 0..n {
            q[i] += dq[i];
        }
        arm.clamp(&mut q);
    }
    None
}

/// Damped least-squares IK with random restarts drawn inside the joint limits.
pub fn solve_ik<R: Rng + ?Sized>(
    arm: &ArmModel,
    target: &Pose,
    seed: &JointVector,
    cfg: &IkConfig,
    rng: &mut R,
) -> Result<JointVector, IkError> {
    arm.check_len(seed)?;
    assert!(arm.dof() <= 16, "arms with more than 16 joints are not supported");
    let distance = (target.translation.vector - arm.shoulder()).norm();
    let reach = arm.reach();
    if distance > reach {
        return Err(IkError::Unreachable { distance, reach });
    }
    let mut start = seed.0.clone();
    arm.clamp(&mut start);
    for attempt in 0..=cfg.restarts {
        if attempt > 0 {
            start = arm.random_configuration(rng).0;
        }
        if let Some(q) = dls_descent(arm, target, start.clone(), cfg) {
            return Ok(JointVector(q));
        }
    }
    Err(IkError::NoConvergence {
        attempts: cfg.restarts + 1,
    })
}

/// Straight joint-space interpolation with at most `step` radians per joint
/// between consecutive configurations; both endpoints are included.
pub fn linear_joint_motion(q0: &JointVector, q1: &JointVector, step: f64) -> Vec<JointVector> {
    assert!(step > 0.0);
    let span = q0.max_delta(q1);
    if span == 0.0 {
        return vec![q0.clone()];
    }
    let mut out = Vec::with_capacity((span / step).ceil() as usize + 1);
    let mut k = 0usize;
    loop {
        let u = k as f64 * step / span;
        if u >= 1.0 - 1e-12 {
            break;
        }
        out.push(q0.lerp(q1, u));
        k += 1;
    }
    out.push(q1.clone());
    out
}

/// A dual-arm robot sharing one base frame.
#[derive(Debug, Clone)]
pub struct RobotModel {
    pub name: String,
    pub base: Pose,
    pub left: ArmModel,
    pub right: ArmModel,
    /// Static body boxes (torso, head) in world coordinates.
    pub body: Vec<(String, Obb)>,
    pub home_left: JointVector,
    pub home_right: JointVector,
    pub gripper_aperture: [f64; 2],
}

impl RobotModel {
    pub fn arm(&self, hand: Hand) -> &ArmModel {
        match hand {
            Hand::Left => &self.left,
            Hand::Right => &self.right,
        }
    }

    pub fn home(&self, hand: Hand) -> &JointVector {
        match hand {
            Hand::Left => &self.home_left,
            Hand::Right => &self.home_right,
        }
    }
}

/// Builds a joint with an origin given as translation + roll/pitch/yaw degrees.
pub fn joint(xyz: [f64; 3], rpy_deg: [f64; 3], axis: Vec3, limits_deg: [f64; 2]) -> Joint {
    Joint {
        origin: pose(Vec3::from(xyz), crate::geometry::rotation_from_rpy_deg(rpy_deg)),
        axis: Unit::new_normalize(axis),
        lower: limits_deg[0].to_radians(),
        upper: limits_deg[1].to_radians(),
    }
}
