//! Taut-cable model. A cable slider splits the cable between the tool and
//! its source into two straight segments; the gadget at the source either
//! keeps constant tension (balancer) or winds the cable (pulley).

use nalgebra::Unit;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angle_between, z_axis, Pose, Rotation, Segment, Shape, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CableError {
    #[error("bend angle undefined for a zero-length cable segment")]
    ZeroVector,
}

/// Cable source and the attach point on the tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CableAnchors {
    /// Cable source position in the world frame.
    pub h: Vec3,
    /// Attach point in the tool model frame.
    pub tool_attach_local: Vec3,
    /// Surface normal at the attach point in the tool model frame.
    pub tool_attach_normal_local: Unit<Vec3>,
}

impl CableAnchors {
    /// Tool cable frame: origin at the attach point, z along the attach normal.
    pub fn cable_frame(&self, tool: &Pose) -> Pose {
        let align = Rotation::rotation_between(&Vec3::z(), &self.tool_attach_normal_local)
            .unwrap_or_else(|| Rotation::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI));
        crate::geometry::pose(
            crate::geometry::transform_point(tool, &self.tool_attach_local),
            tool.rotation * align,
        )
    }
}

/// Slider bottom position, bottom-to-top offset, and local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliderState {
    pub s: Vec3,
    pub b: Vec3,
    pub frame: Rotation,
}

impl SliderState {
    /// Slider seated at `s` on the cable coming from the tool attach point
    /// `t`. Its z axis continues the tool-side segment; its x axis is world x
    /// orthogonalized against z (world y when z is nearly along world x).
    pub fn on_cable(s: Vec3, t: Vec3, height: f64) -> SliderState {
        let d = s - t;
        let z = if d.norm() > 1e-9 { d.normalize() } else { Vec3::z() };
        SliderState::with_axis(s, z, height)
    }

    pub fn with_axis(s: Vec3, z: Vec3, height: f64) -> SliderState {
        let z = z.normalize();
        let mut x = Vec3::x() - z * z.x;
        if x.norm() < 1e-6 {
            x = Vec3::y() - z * z.y;
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let m = nalgebra::Matrix3::from_columns(&[x, y, z]);
        let frame = Rotation::from_matrix(&m);
        SliderState {
            s,
            b: z * height,
            frame,
        }
    }

    pub fn top(&self) -> Vec3 {
        self.s + self.b
    }

    pub fn center(&self) -> Vec3 {
        self.s + self.b * 0.5
    }

    /// Slider pose with its origin at the slider center.
    pub fn pose(&self) -> Pose {
        crate::geometry::pose(self.center(), self.frame)
    }
}

/// Cable segment from the tool attach point to the slider bottom.
pub fn segment_tool_slider(s: &Vec3, t: &Vec3) -> Vec3 {
    s - t
}

/// Cable segment vector between the slider and the source, `h - s + b`.
pub fn segment_slider_source(h: &Vec3, s: &Vec3, b: &Vec3) -> Vec3 {
    h - s + b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CableState {
    pub t: Vec3,
    pub s: Vec3,
    pub b: Vec3,
    pub h: Vec3,
    pub mu_ts: Vec3,
    pub mu_sp: Vec3,
}

impl CableState {
    pub fn new(t: Vec3, slider: &SliderState, h: Vec3) -> CableState {
        CableState {
            t,
            s: slider.s,
            b: slider.b,
            h,
            mu_ts: segment_tool_slider(&slider.s, &t),
            mu_sp: segment_slider_source(&h, &slider.s, &slider.b),
        }
    }

    pub fn tool_segment(&self) -> Segment {
        Segment::new(self.t, self.s)
    }

    /// Physical segment from the slider top to the source.
    pub fn source_segment(&self) -> Segment {
        Segment::new(self.s + self.b, self.h)
    }

    /// Point on the source-side cable; `u = 0` at the slider top, `u = 1` at the source.
    pub fn source_point(&self, u: f64) -> Vec3 {
        self.source_segment().point_at(u)
    }
}

fn bend_angle(v: &Vec3, frame: &Rotation) -> Result<f64, CableError> {
    if v.norm() <= 1e-12 {
        return Err(CableError::ZeroVector);
    }
    Ok(angle_between(v, &z_axis(frame)).to_degrees())
}

/// Degrees between the tool-side segment and the tool cable frame's z axis.
pub fn bend_angle_tool(mu_ts: &Vec3, tool_rot: &Rotation) -> Result<f64, CableError> {
    bend_angle(mu_ts, tool_rot)
}

/// Degrees between the source-side segment and the slider's z axis.
pub fn bend_angle_slider(mu_sp: &Vec3, slider_frame: &Rotation) -> Result<f64, CableError> {
    bend_angle(mu_sp, slider_frame)
}

pub fn required_cable_length(state: &CableState) -> f64 {
    state.mu_ts.norm() + state.mu_sp.norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GadgetKind {
    Balancer,
    Pulley {
        /// Cable length paid out at the start of the task, meters; `None`
        /// starts with exactly the required length.
        outside_length: Option<f64>,
        /// Length mismatch that triggers the motor, meters.
        threshold: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GadgetConfig {
    pub kind: GadgetKind,
    pub cable_radius: f64,
    pub slider_height: f64,
}

pub const DEFAULT_PULLEY_THRESHOLD: f64 = 0.05;
pub const DEFAULT_CABLE_RADIUS: f64 = 0.004;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "delta", rename_all = "snake_case")]
pub enum PulleyCommand {
    None,
    Extend(f64),
    Retract(f64),
}

impl PulleyCommand {
    pub fn apply(&self, outside_length: f64) -> f64 {
        match *self {
            PulleyCommand::None => outside_length,
            PulleyCommand::Extend(d) => outside_length + d,
            PulleyCommand::Retract(d) => outside_length - d,
        }
    }
}

pub fn pulley_adjust(outside_length: f64, required: f64, threshold: f64) -> PulleyCommand {
    debug_assert!(threshold > 0.0);
    let diff = required - outside_length;
    if diff.abs() <= threshold {
        PulleyCommand::None
    } else if diff > 0.0 {
        PulleyCommand::Extend(diff)
    } else {
        PulleyCommand::Retract(-diff)
    }
}

/// A collision body seen by the cable.
#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    pub name: String,
    pub shape: Shape,
    pub margin: f64,
}

impl Body {
    pub fn new(name: impl Into<String>, shape: Shape) -> Body {
        Body {
            name: name.into(),
            shape,
            margin: 0.0,
        }
    }
}

/// Ball around a contact point (tool attach point, slider, cable grab point)
/// inside which the listed bodies may touch the cable.
#[derive(Debug, Clone, PartialEq)]
pub struct ExclusionZone {
    pub center: Vec3,
    pub radius: f64,
    /// Indices into the body slice passed to [`cable_collision_events`].
    pub bodies: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CableSegment {
    ToolSlider,
    SliderSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub segment: CableSegment,
    pub body: String,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CableCheck {
    pub cable_radius: f64,
    pub clearance: f64,
}

/// Distance from one cable segment to one body, honoring exclusion zones.
/// `None` when the exclusion zones swallow the whole segment.
pub fn segment_body_distance(
    segment: &Segment,
    body_index: usize,
    body: &Body,
    exclusions: &[ExclusionZone],
) -> Option<f64> {
    let mut pieces = vec![*segment];
    for zone in exclusions.iter().filter(|z| z.bodies.contains(&body_index)) {
        pieces = pieces
            .iter()
            .flat_map(|p| p.outside_ball(&zone.center, zone.radius))
            .collect();
    }
    pieces
        .iter()
        .map(|p| body.shape.segment_distance(p))
        .reduce(f64::min)
}

/// Every (segment, body) pair closer than cable radius + body margin + clearance.
pub fn cable_collision_events(
    state: &CableState,
    bodies: &[Body],
    exclusions: &[ExclusionZone],
    check: &CableCheck,
) -> Vec<CollisionEvent> {
    let mut events = Vec::new();
    for (kind, segment) in [
        (CableSegment::ToolSlider, state.tool_segment()),
        (CableSegment::SliderSource, state.source_segment()),
    ] {
        for (i, body) in bodies.iter().enumerate() {
            if let Some(d) = segment_body_distance(&segment, i, body, exclusions) {
                if d < check.cable_radius + body.margin + check.clearance {
                    events.push(CollisionEvent {
                        segment: kind,
                        body: body.name.clone(),
                        distance: d,
                    });
                }
            }
        }
    }
    events
}

/// Short-circuiting variant of [`cable_collision_events`].
pub fn cable_is_clear(
    state: &CableState,
    bodies: &[Body],
    exclusions: &[ExclusionZone],
    check: &CableCheck,
) -> bool {
    [state.tool_segment(), state.source_segment()]
        .iter()
        .all(|segment| {
            bodies.iter().enumerate().all(|(i, body)| {
                segment_body_distance(segment, i, body, exclusions)
                    .map_or(true, |d| d >= check.cable_radius + body.margin + check.clearance)
            })
        })
}
