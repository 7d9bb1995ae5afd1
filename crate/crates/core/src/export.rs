//! Trajectory files. Every step carries the geometry needed to recompute
//! its cable audit from the file alone, including the embedded scenario.

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ams::{AmsPlan, PulleyRecord, RejectTally};
use crate::bench::{Mode, Outcome};
use crate::cable::{
    bend_angle_slider, bend_angle_tool, cable_collision_events, CableCheck, CableState, CollisionEvent, SliderState,
};
use crate::geometry::{Pose, Rotation, Vec3};
use crate::kinematics::{Hand, JointVector};
use crate::scenario::{resolve, Scenario, ScenarioError, ScenarioFile};
use crate::tms::{rest_slider, Action, Hold, Hop, TmsPlan};
use crate::world::World;

pub const FORMAT: &str = "tetherplan-trajectory/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub position: [f64; 3],
    pub quaternion_wxyz: [f64; 4],
}

impl PoseRecord {
    pub fn from_pose(p: &Pose) -> PoseRecord {
        PoseRecord {
            position: p.translation.vector.into(),
            quaternion_wxyz: quaternion_wxyz(&p.rotation),
        }
    }

    /// Rebuilds the pose without renormalizing, so values round-trip bit for bit.
    pub fn to_pose(&self) -> Pose {
        Pose::from_parts(Vec3::from(self.position).into(), rotation_from_wxyz(&self.quaternion_wxyz))
    }
}

fn quaternion_wxyz(r: &Rotation) -> [f64; 4] {
    [r.w, r.i, r.j, r.k]
}

fn rotation_from_wxyz(q: &[f64; 4]) -> Rotation {
    UnitQuaternion::new_unchecked(Quaternion::new(q[0], q[1], q[2], q[3]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmPair {
    pub left: JointVector,
    pub right: JointVector,
}

impl ArmPair {
    pub fn joints(&self, hand: Hand) -> &JointVector {
        match hand {
            Hand::Left => &self.left,
            Hand::Right => &self.right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliderRecord {
    pub bottom: [f64; 3],
    /// Bottom-to-top offset.
    pub offset: [f64; 3],
    pub frame_wxyz: [f64; 4],
}

impl SliderRecord {
    pub fn from_state(s: &SliderState) -> SliderRecord {
        SliderRecord {
            bottom: s.s.into(),
            offset: s.b.into(),
            frame_wxyz: quaternion_wxyz(&s.frame),
        }
    }

    pub fn to_state(&self) -> SliderState {
        SliderState {
            s: Vec3::from(self.bottom),
            b: Vec3::from(self.offset),
            frame: rotation_from_wxyz(&self.frame_wxyz),
        }
    }
}

/// Taut cable: tool attach point `t`, slider bottom and top, source `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CableRecord {
    pub t: [f64; 3],
    pub slider_bottom: [f64; 3],
    pub slider_top: [f64; 3],
    pub h: [f64; 3],
}

impl CableRecord {
    fn new(t: Vec3, slider: &SliderState, h: Vec3) -> CableRecord {
        CableRecord {
            t: t.into(),
            slider_bottom: slider.s.into(),
            slider_top: slider.top().into(),
            h: h.into(),
        }
    }

    pub fn tool_segment(&self) -> [[f64; 3]; 2] {
        [self.t, self.slider_bottom]
    }

    pub fn source_segment(&self) -> [[f64; 3]; 2] {
        [self.slider_top, self.h]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BendRecord {
    pub tool_deg: f64,
    pub slider_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldRecord {
    pub hand: Hand,
    pub u: f64,
    pub grab_point: [f64; 3],
    pub joints: JointVector,
    pub approach: Vec<JointVector>,
    pub retreat: Vec<JointVector>,
    /// Events along the approach and retreat motions.
    pub motion_collisions: Vec<CollisionEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstepRecord {
    pub assistant: ArmPair,
    pub slider: SliderRecord,
    pub collisions: Vec<CollisionEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub l: usize,
    pub action: Action,
    pub active: Option<Hand>,
    pub holds: Vec<Hold>,
    /// Master hands touching the tool; the cable may touch them near `t`.
    pub contact: Vec<Hand>,
    pub tool: PoseRecord,
    pub master: ArmPair,
    pub assistant: Option<ArmPair>,
    pub slider: SliderRecord,
    pub candidate: Option<usize>,
    pub reused: bool,
    pub cable: CableRecord,
    pub bend: Option<BendRecord>,
    pub pulley: Option<PulleyRecord>,
    pub cable_hold: Option<HoldRecord>,
    /// Assistant motion from the previous step into this one.
    pub substeps: Vec<SubstepRecord>,
    pub collisions: Vec<CollisionEvent>,
}

impl StepRecord {
    /// Events in this step, its substeps and its hold motions.
    pub fn event_count(&self) -> usize {
        self.collisions.len()
            + self.substeps.iter().map(|s| s.collisions.len()).sum::<usize>()
            + self.cable_hold.as_ref().map_or(0, |h| h.motion_collisions.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryExport {
    pub format: String,
    pub task: String,
    pub goals: Vec<u32>,
    pub mode: Mode,
    pub seed: u64,
    pub outcome: Outcome,
    pub failure: Option<String>,
    pub slider_hand: Option<Hand>,
    pub slider_grasp: Option<usize>,
    pub hops: Vec<Hop>,
    pub rejects: Option<RejectTally>,
    pub collision_count: usize,
    pub steps: Vec<StepRecord>,
    pub scenario: ScenarioFile,
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed trajectory at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported trajectory format {0:?}")]
    Format(String),
    #[error("embedded scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("step indices are not contiguous at position {0}")]
    StepIndex(usize),
    #[error("step {0}: {1}")]
    Step(usize, String),
}

impl TrajectoryExport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("export serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<TrajectoryExport, ExportError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let export: TrajectoryExport = serde_path_to_error::deserialize(de).map_err(|e| ExportError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        if export.format != FORMAT {
            return Err(ExportError::Format(export.format));
        }
        if let Some(k) = export.steps.iter().enumerate().position(|(k, s)| s.l != k) {
            return Err(ExportError::StepIndex(k));
        }
        Ok(export)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<TrajectoryExport, ExportError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ExportError::Io {
            path: path.display().to_string(),
            source,
        })?;
        TrajectoryExport::from_json(&text)
    }

    pub fn resolve_scenario(&self) -> Result<Scenario, ExportError> {
        Ok(resolve(self.scenario.clone())?.scenario)
    }

    pub fn handovers(&self) -> usize {
        self.hops.iter().filter(|h| h.kind == Some(crate::tms::EdgeKind::Handover)).count()
    }

    pub fn placements(&self) -> usize {
        self.hops.iter().filter(|h| h.kind == Some(crate::tms::EdgeKind::Regrasp)).count()
    }
}

/// Header fields of an export, filled in by the caller.
#[derive(Debug, Clone)]
pub struct ExportHeader {
    pub task: String,
    pub goals: Vec<u32>,
    pub mode: Mode,
    pub seed: u64,
}

/// Builds step records for a plan and audits them. The outcome is
/// `Success` or `SuccessWithCableCollisions` according to the audit.
pub fn build_export(scenario: &Scenario, header: ExportHeader, tms: &TmsPlan, ams: Option<&AmsPlan>) -> TrajectoryExport {
    let h = scenario.anchors.h;
    let mut steps: Vec<StepRecord> = tms
        .steps
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let frame = scenario.anchors.cable_frame(&m.tool);
            let t = frame.translation.vector;
            let a = ams.map(|p| &p.steps[k]);
            let slider = match a {
                Some(a) => a.slider,
                None => rest_slider(&t, &h, scenario.gadget.slider_height),
            };
            let cable = CableState::new(t, &slider, h);
            let bend = match (
                bend_angle_tool(&cable.mu_ts, &frame.rotation),
                bend_angle_slider(&cable.mu_sp, &slider.frame),
            ) {
                (Ok(tool_deg), Ok(slider_deg)) => Some(BendRecord { tool_deg, slider_deg }),
                _ => None,
            };
            StepRecord {
                l: k,
                action: m.action,
                active: m.active,
                holds: m.holds.clone(),
                contact: m.contact_hands(),
                tool: PoseRecord::from_pose(&m.tool),
                master: ArmPair {
                    left: m.left.clone(),
                    right: m.right.clone(),
                },
                assistant: a.map(|a| ArmPair {
                    left: a.left.clone(),
                    right: a.right.clone(),
                }),
                slider: SliderRecord::from_state(&slider),
                candidate: a.map(|a| a.candidate),
                reused: a.is_some_and(|a| a.reused),
                cable: CableRecord::new(t, &slider, h),
                bend,
                pulley: a.and_then(|a| a.pulley),
                cable_hold: a.and_then(|a| a.cable_hold.as_ref()).map(|c| HoldRecord {
                    hand: c.hand,
                    u: c.u,
                    grab_point: c.grab_point.into(),
                    joints: c.joints.clone(),
                    approach: c.approach.clone(),
                    retreat: c.retreat.clone(),
                    motion_collisions: Vec::new(),
                }),
                substeps: a
                    .map(|a| {
                        a.substeps
                            .iter()
                            .map(|s| SubstepRecord {
                                assistant: ArmPair {
                                    left: s.left.clone(),
                                    right: s.right.clone(),
                                },
                                slider: SliderRecord::from_state(&s.slider),
                                collisions: Vec::new(),
                            })
                            .collect()
                    })
                    .unwrap_or_default(),
                collisions: Vec::new(),
            }
        })
        .collect();
    let slider_hand = ams.map(|p| p.slider_hand);
    let audits = audit_steps(scenario, &steps, slider_hand);
    let mut count = 0;
    for (step, audit) in steps.iter_mut().zip(audits) {
        count += audit.total();
        step.collisions = audit.main;
        for (sub, ev) in step.substeps.iter_mut().zip(audit.substeps) {
            sub.collisions = ev;
        }
        if let Some(hold) = step.cable_hold.as_mut() {
            hold.motion_collisions = audit.hold_motion;
        }
    }
    TrajectoryExport {
        format: FORMAT.to_string(),
        task: header.task,
        goals: header.goals,
        mode: header.mode,
        seed: header.seed,
        outcome: if count == 0 {
            Outcome::Success
        } else {
            Outcome::SuccessWithCableCollisions
        },
        failure: None,
        slider_hand,
        slider_grasp: ams.map(|p| p.slider_grasp),
        hops: tms.hops.clone(),
        rejects: ams.map(|p| p.rejects.clone()),
        collision_count: count,
        steps,
        scenario: scenario.file.clone(),
    }
}

/// Export of a run that produced no plan.
pub fn failed_export(scenario: &Scenario, header: ExportHeader, reason: String) -> TrajectoryExport {
    TrajectoryExport {
        format: FORMAT.to_string(),
        task: header.task,
        goals: header.goals,
        mode: header.mode,
        seed: header.seed,
        outcome: Outcome::Failure,
        failure: Some(reason),
        slider_hand: None,
        slider_grasp: None,
        hops: Vec::new(),
        rejects: None,
        collision_count: 0,
        steps: Vec::new(),
        scenario: scenario.file.clone(),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepAudit {
    pub main: Vec<CollisionEvent>,
    pub substeps: Vec<Vec<CollisionEvent>>,
    pub hold_motion: Vec<CollisionEvent>,
}

impl StepAudit {
    pub fn total(&self) -> usize {
        self.main.len() + self.substeps.iter().map(Vec::len).sum::<usize>() + self.hold_motion.len()
    }
}

struct Auditor<'a> {
    scenario: &'a Scenario,
    world: World<'a>,
    check: CableCheck,
    slider_hand: Option<Hand>,
}

impl Auditor<'_> {
    fn events(
        &self,
        rec: &StepRecord,
        assistant: Option<(&JointVector, &JointVector)>,
        slider: &SliderState,
        grab: Option<(Hand, Vec3)>,
    ) -> Vec<CollisionEvent> {
        let r = self.scenario.params.exclusion_radius;
        let t = Vec3::from(rec.cable.t);
        let master = self.world.master_arms(&rec.master.left, &rec.master.right);
        let arms = assistant.map(|(l, rq)| self.world.assistant_arms(l, rq));
        let scene = self.world.cable_scene(&master, arms.as_ref());
        let mut zones: Vec<_> = rec.contact.iter().map(|h| scene.master_zone(*h, t, r)).collect();
        if arms.is_some() {
            if let Some(hand) = self.slider_hand {
                zones.push(scene.assistant_zone(hand, slider.center(), r));
            }
            if let Some((hand, p)) = grab {
                zones.push(scene.assistant_zone(hand, p, r));
            }
        }
        let cable = CableState::new(t, slider, Vec3::from(rec.cable.h));
        cable_collision_events(&cable, &scene.bodies, &zones, &self.check)
    }

    fn with_free(&self, rec: &StepRecord, free: Hand, q: &JointVector) -> Option<(JointVector, JointVector)> {
        let a = rec.assistant.as_ref()?;
        Some(match free {
            Hand::Left => (q.clone(), a.right.clone()),
            Hand::Right => (a.left.clone(), q.clone()),
        })
    }

    fn step(&self, steps: &[StepRecord], k: usize) -> StepAudit {
        let rec = &steps[k];
        let slider = rec.slider.to_state();
        let grab = rec.cable_hold.as_ref().map(|c| (c.hand, Vec3::from(c.grab_point)));
        let main = self.events(rec, rec.assistant.as_ref().map(|a| (&a.left, &a.right)), &slider, grab);
        let substeps = rec
            .substeps
            .iter()
            .map(|s| self.events(rec, Some((&s.assistant.left, &s.assistant.right)), &s.slider.to_state(), None))
            .collect();
        let mut hold_motion = Vec::new();
        if let Some(hold) = &rec.cable_hold {
            let p = Vec3::from(hold.grab_point);
            let before = &steps[k.saturating_sub(1)];
            for q in &hold.approach {
                if let Some((l, r)) = self.with_free(before, hold.hand, q) {
                    hold_motion.extend(self.events(before, Some((&l, &r)), &before.slider.to_state(), Some((hold.hand, p))));
                }
            }
            for q in &hold.retreat {
                if let Some((l, r)) = self.with_free(rec, hold.hand, q) {
                    hold_motion.extend(self.events(rec, Some((&l, &r)), &slider, Some((hold.hand, p))));
                }
            }
        }
        StepAudit {
            main,
            substeps,
            hold_motion,
        }
    }
}

fn audit_steps(scenario: &Scenario, steps: &[StepRecord], slider_hand: Option<Hand>) -> Vec<StepAudit> {
    use rayon::prelude::*;
    let auditor = Auditor {
        scenario,
        world: World::new(scenario),
        check: CableCheck {
            cable_radius: scenario.gadget.cable_radius,
            clearance: scenario.params.clearance,
        },
        slider_hand,
    };
    (0..steps.len()).into_par_iter().map(|k| auditor.step(steps, k)).collect()
}

/// Recomputes the cable audit of every step from the recorded joints and
/// slider states.
pub fn replay(export: &TrajectoryExport) -> Result<Vec<StepAudit>, ExportError> {
    let scenario = export.resolve_scenario()?;
    for s in &export.steps {
        let n_master = scenario.master.left.joints.len();
        if s.master.left.len() != n_master || s.master.right.len() != scenario.master.right.joints.len() {
            return Err(ExportError::Step(s.l, "master joint count mismatch".into()));
        }
        if let Some(a) = &s.assistant {
            if a.left.len() != scenario.assistant.left.joints.len()
                || a.right.len() != scenario.assistant.right.joints.len()
            {
                return Err(ExportError::Step(s.l, "assistant joint count mismatch".into()));
            }
        }
    }
    Ok(audit_steps(&scenario, &export.steps, export.slider_hand))
}

/// Whether the recorded events match a fresh replay exactly.
pub fn verify(export: &TrajectoryExport) -> Result<bool, ExportError> {
    let audits = replay(export)?;
    let total: usize = audits.iter().map(StepAudit::total).sum();
    let same = export.steps.iter().zip(&audits).all(|(s, a)| {
        s.collisions == a.main
            && s.substeps.iter().map(|x| &x.collisions).eq(a.substeps.iter())
            && s.cable_hold.as_ref().map_or(a.hold_motion.is_empty(), |h| h.motion_collisions == a.hold_motion)
    });
    Ok(same && total == export.collision_count)
}

/// One row per executed configuration, in execution order: substeps, the hold
/// approach, the step itself, then the hold retreat.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenseRow {
    pub l: usize,
    pub phase: &'static str,
    pub master: ArmPair,
    pub assistant: Option<ArmPair>,
    pub slider_bottom: [f64; 3],
}

pub fn dense_rows(export: &TrajectoryExport) -> Vec<DenseRow> {
    let mut rows = Vec::new();
    for (k, s) in export.steps.iter().enumerate() {
        let with = |a: Option<ArmPair>, slider: &SliderRecord, phase| DenseRow {
            l: s.l,
            phase,
            master: s.master.clone(),
            assistant: a,
            slider_bottom: slider.bottom,
        };
        for sub in &s.substeps {
            rows.push(with(Some(sub.assistant.clone()), &sub.slider, "substep"));
        }
        let free_pose = |base: &ArmPair, hand: Hand, q: &JointVector| match hand {
            Hand::Left => ArmPair {
                left: q.clone(),
                right: base.right.clone(),
            },
            Hand::Right => ArmPair {
                left: base.left.clone(),
                right: q.clone(),
            },
        };
        if let (Some(hold), Some(a)) = (&s.cable_hold, &s.assistant) {
            let base = export.steps[k.saturating_sub(1)].assistant.clone().unwrap_or_else(|| a.clone());
            for q in &hold.approach {
                rows.push(with(Some(free_pose(&base, hold.hand, q)), &s.slider, "hold_approach"));
            }
        }
        rows.push(with(s.assistant.clone(), &s.slider, "step"));
        if let (Some(hold), Some(a)) = (&s.cable_hold, &s.assistant) {
            for q in &hold.retreat {
                rows.push(with(Some(free_pose(a, hold.hand, q)), &s.slider, "hold_retreat"));
            }
        }
    }
    rows
}

/// Dense rows as CSV: `l,phase,master_left_*,master_right_*,assistant_left_*,
/// assistant_right_*,slider_x,slider_y,slider_z`; joints in radians.
pub fn dense_csv(export: &TrajectoryExport) -> String {
    let rows = dense_rows(export);
    let width = |f: fn(&DenseRow) -> usize| rows.iter().map(f).max().unwrap_or(0);
    let nml = width(|r| r.master.left.len());
    let nmr = width(|r| r.master.right.len());
    let nal = width(|r| r.assistant.as_ref().map_or(0, |a| a.left.len()));
    let nar = width(|r| r.assistant.as_ref().map_or(0, |a| a.right.len()));
    let mut header = vec!["l".to_string(), "phase".to_string()];
    for (prefix, n) in [
        ("master_left", nml),
        ("master_right", nmr),
        ("assistant_left", nal),
        ("assistant_right", nar),
    ] {
        header.extend((0..n).map(|i| format!("{prefix}_{i}")));
    }
    header.extend(["slider_x", "slider_y", "slider_z"].map(String::from));
    let mut out = header.join(",");
    out.push('\n');
    for r in &rows {
        let mut cells = vec![r.l.to_string(), r.phase.to_string()];
        let mut push = |q: Option<&JointVector>, n: usize| {
            for i in 0..n {
                cells.push(q.and_then(|q| q.get(i)).map_or(String::new(), |v| v.to_string()));
            }
        };
        push(Some(&r.master.left), nml);
        push(Some(&r.master.right), nmr);
        push(r.assistant.as_ref().map(|a| &a.left), nal);
        push(r.assistant.as_ref().map(|a| &a.right), nar);
        cells.extend(r.slider_bottom.iter().map(|v| v.to_string()));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
