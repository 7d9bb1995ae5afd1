//! Scenario files: robots, environment, tool, gadget, goals, benchmarks and
//! planner parameters. Files are JSON; angles are degrees, lengths meters.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::Unit;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ams::SamplingConfig;
use crate::cable::{CableAnchors, GadgetConfig, GadgetKind};
use crate::geometry::{pose, rotation_from_rpy_deg, Capsule, Obb, Pose, Vec3};
use crate::kinematics::{joint, ArmModel, Hand, JointVector, LinkCapsule, RobotModel};
use crate::tms::Grasp;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid value at `{path}`: {message}")]
    Validation { path: String, message: String },
}

impl ScenarioError {
    /// Field path the error refers to, if any.
    pub fn field_path(&self) -> Option<&str> {
        match self {
            ScenarioError::Io { .. } => None,
            ScenarioError::Parse { path, .. } | ScenarioError::Validation { path, .. } => Some(path),
        }
    }
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy_deg: [f64; 3],
}

impl PoseSpec {
    pub fn to_pose(&self) -> Pose {
        pose(Vec3::from(self.xyz), rotation_from_rpy_deg(self.rpy_deg))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy_deg: [f64; 3],
    pub axis: [f64; 3],
    pub limits_deg: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub joint: usize,
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub joints: Vec<JointSpec>,
    pub links: Vec<LinkSpec>,
    /// Flange to gripper center point.
    pub tool: PoseSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub name: String,
    pub center: PoseSpec,
    pub half_extents: [f64; 3],
}

impl BoxSpec {
    fn to_obb(&self, frame: &Pose) -> Obb {
        Obb::new(frame * self.center.to_pose(), Vec3::from(self.half_extents))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub base: PoseSpec,
    /// Key into `arm_models`.
    pub arm_model: String,
    pub left_mount: PoseSpec,
    pub right_mount: PoseSpec,
    pub home_left_deg: Vec<f64>,
    pub home_right_deg: Vec<f64>,
    /// Boxes in the robot base frame.
    #[serde(default)]
    pub body: Vec<BoxSpec>,
    #[serde(default = "default_aperture")]
    pub gripper_aperture: [f64; 2],
}

fn default_aperture() -> [f64; 2] {
    [0.0, 0.08]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotsSpec {
    pub master: RobotSpec,
    pub assistant: RobotSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspSpec {
    pub name: String,
    pub hand: Hand,
    /// Gripper pose in the tool model frame.
    pub pose: PoseSpec,
    #[serde(default = "default_grasp_aperture")]
    pub aperture: f64,
}

fn default_grasp_aperture() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    /// Tool body capsule in the tool model frame.
    pub body_a: [f64; 3],
    pub body_b: [f64; 3],
    pub body_radius: f64,
    pub grasps: Vec<GraspSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorsSpec {
    pub h: [f64; 3],
    pub tool_attach_local: [f64; 3],
    pub tool_attach_normal_local: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GadgetKindSpec {
    Balancer,
    Pulley,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GadgetSpec {
    pub kind: GadgetKindSpec,
    /// Initial paid-out length for the pulley; `null` starts taut.
    #[serde(default)]
    pub outside_length: Option<f64>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_cable_radius")]
    pub cable_radius: f64,
    #[serde(default = "default_slider_height")]
    pub slider_height: f64,
}

fn default_threshold() -> f64 {
    crate::cable::DEFAULT_PULLEY_THRESHOLD
}
fn default_cable_radius() -> f64 {
    crate::cable::DEFAULT_CABLE_RADIUS
}
fn default_slider_height() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub id: u32,
    pub pose: PoseSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub id: String,
    pub goals: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliderGraspSpec {
    /// Gripper pose in the slider frame (origin at the slider center).
    pub pose: PoseSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerSpec {
    pub omega: f64,
    pub theta_deg: Vec<f64>,
    pub gamma_deg: Vec<f64>,
    pub include_base_case: bool,
    pub joint_step_deg: f64,
    pub clearance: f64,
    pub exclusion_radius: f64,
    pub approach_distance: f64,
    pub lift_height: f64,
    pub stitch_translation: f64,
    pub stitch_rotation_deg: f64,
    pub hold_fractions: Vec<f64>,
    pub budget_s: f64,
    pub seed: u64,
    pub repeats: usize,
    pub slider_hand: Hand,
}

impl Default for PlannerSpec {
    fn default() -> Self {
        Self {
            omega: 0.325,
            theta_deg: vec![30.0, 60.0],
            gamma_deg: vec![0.0, 60.0, 120.0, 180.0, 240.0, 300.0],
            include_base_case: true,
            joint_step_deg: 0.05f64.to_degrees(),
            clearance: crate::geometry::DEFAULT_CLEARANCE,
            exclusion_radius: 0.1,
            approach_distance: 0.06,
            lift_height: 0.06,
            stitch_translation: 0.02,
            stitch_rotation_deg: 5.0,
            hold_fractions: vec![0.25, 0.5, 0.75],
            budget_s: 120.0,
            seed: 7,
            repeats: 5,
            slider_hand: Hand::Right,
        }
    }
}

/// On-disk scenario layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub name: String,
    pub arm_models: BTreeMap<String, ArmSpec>,
    pub robots: RobotsSpec,
    #[serde(default)]
    pub environment: Vec<BoxSpec>,
    pub tool: ToolSpec,
    pub anchors: AnchorsSpec,
    pub gadget: GadgetSpec,
    pub start: PoseSpec,
    pub goals: Vec<GoalSpec>,
    #[serde(default)]
    pub placements: Vec<PoseSpec>,
    pub handover: PoseSpec,
    pub slider_grasps: Vec<SliderGraspSpec>,
    #[serde(default)]
    pub benchmarks: Vec<BenchmarkSpec>,
    #[serde(default)]
    pub planner: PlannerSpec,
}

#[derive(Debug, Clone)]
pub struct Goal {
    pub id: u32,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub id: String,
    pub goals: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct ToolModel {
    pub body: Capsule,
    pub grasps: Vec<Grasp>,
}

impl ToolModel {
    pub fn body_at(&self, tool: &Pose) -> Capsule {
        Capsule::new(
            crate::geometry::transform_point(tool, &self.body.axis.a),
            crate::geometry::transform_point(tool, &self.body.axis.b),
            self.body.radius,
        )
    }
}

/// Planner parameters in internal units (radians).
#[derive(Debug, Clone)]
pub struct PlannerParams {
    pub sampling: SamplingConfig,
    pub joint_step: f64,
    pub clearance: f64,
    pub exclusion_radius: f64,
    pub approach_distance: f64,
    pub lift_height: f64,
    pub stitch_translation: f64,
    pub stitch_rotation: f64,
    pub hold_fractions: Vec<f64>,
    pub budget_s: f64,
    pub seed: u64,
    pub repeats: usize,
    pub slider_hand: Hand,
}

/// Validated scenario with resolved models.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub master: RobotModel,
    pub assistant: RobotModel,
    pub environment: Vec<(String, Obb)>,
    pub tool: ToolModel,
    pub anchors: CableAnchors,
    pub gadget: GadgetConfig,
    pub start: Pose,
    pub goals: Vec<Goal>,
    pub placements: Vec<Pose>,
    pub handover: Pose,
    pub slider_grasps: Vec<Pose>,
    pub benchmarks: Vec<Benchmark>,
    pub params: PlannerParams,
}

#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn goal(&self, id: u32) -> Option<&Goal> {
        self.goals.iter().find(|g| g.id == id)
    }

    pub fn benchmark(&self, id: &str) -> Option<&Benchmark> {
        self.benchmarks.iter().find(|b| b.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("scenario serializes")
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<LoadedScenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<LoadedScenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let base = e.path().to_string();
        let message = e.inner().to_string();
        ScenarioError::Parse {
            path: missing_field_path(&base, &message),
            message,
        }
    })?;
    resolve(file)
}

/// serde reports a missing field at its parent; append the field name.
fn missing_field_path(base: &str, message: &str) -> String {
    let field = message
        .strip_prefix("missing field `")
        .and_then(|rest| rest.split('`').next());
    match (field, base) {
        (Some(f), "." | "") => f.to_string(),
        (Some(f), b) => format!("{b}.{f}"),
        (None, b) => b.to_string(),
    }
}

fn vec3(v: [f64; 3]) -> Vec3 {
    Vec3::from(v)
}

fn finite3(path: &str, v: [f64; 3]) -> Result<(), ScenarioError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(invalid(path, "non-finite component"))
    }
}

fn build_arm(name: &str, spec: &ArmSpec, base: Pose, path: &str) -> Result<ArmModel, ScenarioError> {
    if spec.joints.is_empty() {
        return Err(invalid(format!("{path}.joints"), "arm needs at least one joint"));
    }
    let mut joints = Vec::with_capacity(spec.joints.len());
    for (i, j) in spec.joints.iter().enumerate() {
        if j.limits_deg[0] >= j.limits_deg[1] {
            return Err(invalid(format!("{path}.joints[{i}].limits_deg"), "lower limit must be below upper"));
        }
        if vec3(j.axis).norm() < 1e-9 {
            return Err(invalid(format!("{path}.joints[{i}].axis"), "zero axis"));
        }
        finite3(&format!("{path}.joints[{i}].xyz"), j.xyz)?;
        joints.push(joint(j.xyz, j.rpy_deg, vec3(j.axis), j.limits_deg));
    }
    let mut links = Vec::with_capacity(spec.links.len());
    for (i, l) in spec.links.iter().enumerate() {
        if l.radius <= 0.0 {
            return Err(invalid(format!("{path}.links[{i}].radius"), "radius must be positive"));
        }
        if l.joint >= joints.len() {
            return Err(invalid(format!("{path}.links[{i}].joint"), "joint index out of range"));
        }
        links.push(LinkCapsule {
            joint: l.joint,
            a: vec3(l.a),
            b: vec3(l.b),
            radius: l.radius,
        });
    }
    Ok(ArmModel {
        name: name.to_string(),
        base,
        joints,
        links,
        tool: spec.tool.to_pose(),
    })
}

fn build_robot(
    name: &str,
    spec: &RobotSpec,
    models: &BTreeMap<String, ArmSpec>,
    path: &str,
) -> Result<RobotModel, ScenarioError> {
    let arm = models
        .get(&spec.arm_model)
        .ok_or_else(|| invalid(format!("{path}.arm_model"), format!("unknown arm model `{}`", spec.arm_model)))?;
    let base = spec.base.to_pose();
    let model_path = format!("arm_models.{}", spec.arm_model);
    let left = build_arm(&format!("{name}.left"), arm, base * spec.left_mount.to_pose(), &model_path)?;
    let right = build_arm(&format!("{name}.right"), arm, base * spec.right_mount.to_pose(), &model_path)?;
    let to_rad = |v: &[f64]| JointVector(v.iter().map(|d| d.to_radians()).collect());
    let home_left = to_rad(&spec.home_left_deg);
    let home_right = to_rad(&spec.home_right_deg);
    if !left.within_limits(&home_left) {
        return Err(invalid(format!("{path}.home_left_deg"), "length or limits mismatch"));
    }
    if !right.within_limits(&home_right) {
        return Err(invalid(format!("{path}.home_right_deg"), "length or limits mismatch"));
    }
    let mut body = Vec::new();
    for (i, b) in spec.body.iter().enumerate() {
        if b.half_extents.iter().any(|h| *h <= 0.0) {
            return Err(invalid(format!("{path}.body[{i}].half_extents"), "must be positive"));
        }
        body.push((format!("{name}.{}", b.name), b.to_obb(&base)));
    }
    Ok(RobotModel {
        name: name.to_string(),
        base,
        left,
        right,
        body,
        home_left,
        home_right,
        gripper_aperture: spec.gripper_aperture,
    })
}

pub fn resolve(file: ScenarioFile) -> Result<LoadedScenario, ScenarioError> {
    let mut warnings = Vec::new();
    let master = build_robot("master", &file.robots.master, &file.arm_models, "robots.master")?;
    let assistant = build_robot("assistant", &file.robots.assistant, &file.arm_models, "robots.assistant")?;

    let mut environment = Vec::new();
    for (i, b) in file.environment.iter().enumerate() {
        if b.half_extents.iter().any(|h| *h <= 0.0) {
            return Err(invalid(format!("environment[{i}].half_extents"), "must be positive"));
        }
        environment.push((b.name.clone(), b.to_obb(&Pose::identity())));
    }

    if file.tool.body_radius <= 0.0 {
        return Err(invalid("tool.body_radius", "must be positive"));
    }
    if file.tool.grasps.is_empty() {
        return Err(invalid("tool.grasps", "at least one grasp is required"));
    }
    let grasps = file
        .tool
        .grasps
        .iter()
        .map(|g| Grasp {
            name: g.name.clone(),
            hand: g.hand,
            pose: g.pose.to_pose(),
            aperture: g.aperture,
        })
        .collect();
    let tool = ToolModel {
        body: Capsule::new(vec3(file.tool.body_a), vec3(file.tool.body_b), file.tool.body_radius),
        grasps,
    };

    finite3("anchors.h", file.anchors.h)?;
    let normal = vec3(file.anchors.tool_attach_normal_local);
    if normal.norm() < 1e-9 {
        return Err(invalid("anchors.tool_attach_normal_local", "zero vector"));
    }
    if (normal.norm() - 1.0).abs() > 1e-6 {
        warnings.push("anchors.tool_attach_normal_local is not unit length; normalized".to_string());
    }
    let anchors = CableAnchors {
        h: vec3(file.anchors.h),
        tool_attach_local: vec3(file.anchors.tool_attach_local),
        tool_attach_normal_local: Unit::new_normalize(normal),
    };

    let g = &file.gadget;
    if g.threshold <= 0.0 {
        return Err(invalid("gadget.threshold", "must be positive"));
    }
    if g.cable_radius <= 0.0 {
        return Err(invalid("gadget.cable_radius", "must be positive"));
    }
    if g.slider_height <= 0.0 {
        return Err(invalid("gadget.slider_height", "must be positive"));
    }
    let kind = match g.kind {
        GadgetKindSpec::Balancer => GadgetKind::Balancer,
        GadgetKindSpec::Pulley => {
            if g.outside_length.is_some_and(|l| l < 0.0) {
                return Err(invalid("gadget.outside_length", "must be non-negative"));
            }
            GadgetKind::Pulley {
                outside_length: g.outside_length,
                threshold: g.threshold,
            }
        }
    };
    let gadget = GadgetConfig {
        kind,
        cable_radius: g.cable_radius,
        slider_height: g.slider_height,
    };

    if file.goals.is_empty() {
        return Err(invalid("goals", "at least one goal is required"));
    }
    let mut ids = BTreeSet::new();
    for (i, goal) in file.goals.iter().enumerate() {
        if !ids.insert(goal.id) {
            return Err(invalid(format!("goals[{i}].id"), "duplicate goal id"));
        }
    }
    let goals = file
        .goals
        .iter()
        .map(|g| Goal {
            id: g.id,
            pose: g.pose.to_pose(),
        })
        .collect();

    let mut benchmarks = Vec::new();
    for (i, b) in file.benchmarks.iter().enumerate() {
        if b.goals.is_empty() {
            return Err(invalid(format!("benchmarks[{i}].goals"), "empty goal list"));
        }
        let distinct: BTreeSet<_> = b.goals.iter().collect();
        if distinct.len() != b.goals.len() {
            return Err(invalid(format!("benchmarks[{i}].goals"), "goals must be distinct"));
        }
        for (k, id) in b.goals.iter().enumerate() {
            if !ids.contains(id) {
                return Err(invalid(format!("benchmarks[{i}].goals[{k}]"), format!("unknown goal id {id}")));
            }
        }
        benchmarks.push(Benchmark {
            id: b.id.clone(),
            goals: b.goals.clone(),
        });
    }

    if file.slider_grasps.is_empty() {
        return Err(invalid("slider_grasps", "at least one slider grasp is required"));
    }

    let p = &file.planner;
    if p.omega <= 0.0 {
        return Err(invalid("planner.omega", "must be positive"));
    }
    if p.joint_step_deg <= 0.0 {
        return Err(invalid("planner.joint_step_deg", "must be positive"));
    }
    if p.budget_s <= 0.0 {
        return Err(invalid("planner.budget_s", "must be positive"));
    }
    if p.clearance < 0.0 {
        return Err(invalid("planner.clearance", "must be non-negative"));
    }
    let sampling = SamplingConfig {
        omega: p.omega,
        theta_deg: p.theta_deg.clone(),
        gamma_deg: p.gamma_deg.clone(),
        include_base_case: p.include_base_case,
    };
    let count = sampling.candidate_count();
    if count == 0 {
        return Err(invalid("planner.theta_deg", "no slider candidates"));
    }
    if count != 13 {
        let msg = format!("slider candidate count is {count}, not the default 13");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let params = PlannerParams {
        sampling,
        joint_step: p.joint_step_deg.to_radians(),
        clearance: p.clearance,
        exclusion_radius: p.exclusion_radius,
        approach_distance: p.approach_distance,
        lift_height: p.lift_height,
        stitch_translation: p.stitch_translation,
        stitch_rotation: p.stitch_rotation_deg.to_radians(),
        hold_fractions: p.hold_fractions.clone(),
        budget_s: p.budget_s,
        seed: p.seed,
        repeats: p.repeats.max(1),
        slider_hand: p.slider_hand,
    };

    let scenario = Scenario {
        start: file.start.to_pose(),
        placements: file.placements.iter().map(PoseSpec::to_pose).collect(),
        handover: file.handover.to_pose(),
        slider_grasps: file.slider_grasps.iter().map(|g| g.pose.to_pose()).collect(),
        master,
        assistant,
        environment,
        tool,
        anchors,
        gadget,
        goals,
        benchmarks,
        params,
        file,
    };
    Ok(LoadedScenario { scenario, warnings })
}

/// The scenario shipped with the repository.
pub const DEFAULT_SCENARIO_JSON: &str = include_str!("../../../scenarios/default.json");

pub fn default_scenario() -> Scenario {
    parse_scenario(DEFAULT_SCENARIO_JSON)
        .expect("shipped scenario is valid")
        .scenario
}
