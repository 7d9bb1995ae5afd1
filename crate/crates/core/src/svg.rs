//! Orthographic SVG snapshots of exported steps.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::cable::CableSegment;
use crate::export::{ExportError, StepRecord, TrajectoryExport};
use crate::geometry::{Capsule, Obb, Vec3};
use crate::scenario::Scenario;
use crate::world::{World, SLIDER_RADIUS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    /// Looking down the world z axis.
    Top,
    /// Looking along the world x axis; y to the right, z up.
    Front,
    /// Looking along the world y axis; x to the right, z up.
    Side,
}

impl View {
    pub const ALL: [View; 3] = [View::Top, View::Front, View::Side];

    pub fn as_str(self) -> &'static str {
        match self {
            View::Top => "top",
            View::Front => "front",
            View::Side => "side",
        }
    }

    fn project(self, p: &Vec3) -> (f64, f64) {
        match self {
            View::Top => (p.x, p.y),
            View::Front => (p.y, p.z),
            View::Side => (p.x, p.z),
        }
    }
}

impl FromStr for View {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "top" => Ok(View::Top),
            "front" => Ok(View::Front),
            "side" => Ok(View::Side),
            other => Err(format!("unknown view {other:?}, expected top, front or side")),
        }
    }
}

#[derive(Debug, Error)]
pub enum SvgError {
    #[error("step {step} out of range; the trajectory has {len} steps")]
    StepIndex { step: usize, len: usize },
    #[error(transparent)]
    Export(#[from] ExportError),
}

const PX_PER_M: f64 = 400.0;
const MARGIN_M: f64 = 0.1;

const STYLE: &str = ".env{fill:#d9d4c7;stroke:#8a8375;stroke-width:1}\
.body{fill:#c9d3de;stroke:#6b7b8c;stroke-width:1}\
.master{stroke:#3d6ea8;stroke-opacity:.8}\
.assistant{stroke:#c27c2c;stroke-opacity:.8}\
.tool{stroke:#333}\
.slider{stroke:#2a9d55}\
.cable{fill:none;stroke:#222;stroke-width:2}\
.cable.collision{stroke:#d62828;stroke-width:3}\
.anchor{fill:#222}\
.grab{fill:none;stroke:#2a9d55;stroke-width:2}\
text{font:12px sans-serif}";

/// Drawing surface shared by every step of one export so frames line up.
pub struct Canvas<'a> {
    scenario: &'a Scenario,
    world: World<'a>,
    view: View,
    min: (f64, f64),
    max: (f64, f64),
}

/// Counter-clockwise hull of 2D points (monotone chain).
fn hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], *p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], *p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

impl<'a> Canvas<'a> {
    pub fn new(scenario: &'a Scenario, view: View) -> Canvas<'a> {
        let mut pts: Vec<Vec3> = Vec::new();
        for (_, o) in scenario.environment.iter().chain(&scenario.master.body).chain(&scenario.assistant.body) {
            pts.extend(o.corners());
        }
        for robot in [&scenario.master, &scenario.assistant] {
            for arm in [&robot.left, &robot.right] {
                let c = arm.base.translation.vector;
                let r = arm.reach();
                pts.push(c - Vec3::repeat(r));
                pts.push(c + Vec3::repeat(r));
            }
        }
        pts.push(scenario.anchors.h);
        let proj: Vec<(f64, f64)> = pts.iter().map(|p| view.project(p)).collect();
        let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&(f64, f64)) -> f64| proj.iter().map(pick).fold(init, f);
        let min = (
            fold(f64::min, f64::INFINITY, |p| p.0) - MARGIN_M,
            fold(f64::min, f64::INFINITY, |p| p.1) - MARGIN_M,
        );
        let max = (
            fold(f64::max, f64::NEG_INFINITY, |p| p.0) + MARGIN_M,
            fold(f64::max, f64::NEG_INFINITY, |p| p.1) + MARGIN_M,
        );
        Canvas {
            scenario,
            world: World::new(scenario),
            view,
            min,
            max,
        }
    }

    fn size(&self) -> (f64, f64) {
        ((self.max.0 - self.min.0) * PX_PER_M, (self.max.1 - self.min.1) * PX_PER_M)
    }

    fn px(&self, p: &Vec3) -> (f64, f64) {
        let (u, v) = self.view.project(p);
        ((u - self.min.0) * PX_PER_M, (self.max.1 - v) * PX_PER_M)
    }

    fn obb(&self, out: &mut String, class: &str, o: &Obb) {
        let pts: Vec<(f64, f64)> = o.corners().iter().map(|p| self.px(p)).collect();
        let pts: Vec<String> = hull(pts).iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        let _ = writeln!(out, r#"<polygon class="{class}" points="{}"/>"#, pts.join(" "));
    }

    /// A capsule projects to a stadium: a round-capped stroke of its diameter.
    fn capsule(&self, out: &mut String, class: &str, c: &Capsule) {
        let (x1, y1) = self.px(&c.axis.a);
        let (x2, y2) = self.px(&c.axis.b);
        let w = 2.0 * c.radius * PX_PER_M;
        let _ = writeln!(
            out,
            r#"<line class="{class}" x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke-width="{w:.1}" stroke-linecap="round"/>"#
        );
    }

    fn cable(&self, out: &mut String, seg: [[f64; 3]; 2], colliding: bool) {
        let (x1, y1) = self.px(&Vec3::from(seg[0]));
        let (x2, y2) = self.px(&Vec3::from(seg[1]));
        let class = if colliding { "cable collision" } else { "cable" };
        let _ = writeln!(out, r#"<polyline class="{class}" points="{x1:.1},{y1:.1} {x2:.1},{y2:.1}"/>"#);
    }

    pub fn render(&self, export: &TrajectoryExport, step: &StepRecord) -> String {
        let sc = self.scenario;
        let (w, h) = self.size();
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
        );
        let _ = writeln!(out, "<style>{STYLE}</style>");
        for (_, o) in &sc.environment {
            self.obb(&mut out, "env", o);
        }
        for (_, o) in &sc.master.body {
            self.obb(&mut out, "body", o);
        }
        if step.assistant.is_some() {
            for (_, o) in &sc.assistant.body {
                self.obb(&mut out, "body", o);
            }
        }
        let master = self.world.master_arms(&step.master.left, &step.master.right);
        for c in master.all() {
            self.capsule(&mut out, "master", c);
        }
        if let Some(a) = &step.assistant {
            for c in self.world.assistant_arms(&a.left, &a.right).all() {
                self.capsule(&mut out, "assistant", c);
            }
        }
        self.capsule(&mut out, "tool", &sc.tool.body_at(&step.tool.to_pose()));
        let slider = step.slider.to_state();
        self.capsule(&mut out, "slider", &Capsule::new(slider.s, slider.top(), SLIDER_RADIUS));
        let hit = |seg: CableSegment| step.collisions.iter().any(|e| e.segment == seg);
        self.cable(&mut out, step.cable.tool_segment(), hit(CableSegment::ToolSlider));
        self.cable(&mut out, step.cable.source_segment(), hit(CableSegment::SliderSource));
        let (hx, hy) = self.px(&Vec3::from(step.cable.h));
        let _ = writeln!(out, r#"<circle class="anchor" cx="{hx:.1}" cy="{hy:.1}" r="4"/>"#);
        if let Some(hold) = &step.cable_hold {
            let (gx, gy) = self.px(&Vec3::from(hold.grab_point));
            let _ = writeln!(out, r#"<circle class="grab" cx="{gx:.1}" cy="{gy:.1}" r="6"/>"#);
        }
        let _ = writeln!(
            out,
            r#"<text x="8" y="16">{} {} {} step {} {:?}</text>"#,
            export.task,
            export.mode,
            self.view.as_str(),
            step.l,
            step.action
        );
        out.push_str("</svg>\n");
        out
    }
}

/// Renders one step of `export`.
pub fn render_step(export: &TrajectoryExport, step: usize, view: View) -> Result<String, SvgError> {
    let scenario = export.resolve_scenario()?;
    let rec = export.steps.get(step).ok_or(SvgError::StepIndex {
        step,
        len: export.steps.len(),
    })?;
    Ok(Canvas::new(&scenario, view).render(export, rec))
}

/// Renders every step, paired with zero-padded file names
/// `<stem>_<view>_<step>.svg`.
pub fn render_all(export: &TrajectoryExport, view: View, stem: &str) -> Result<Vec<(String, String)>, SvgError> {
    let scenario = export.resolve_scenario()?;
    let canvas = Canvas::new(&scenario, view);
    let width = export.steps.len().saturating_sub(1).to_string().len().max(4);
    Ok(export
        .steps
        .iter()
        .map(|s| {
            (
                format!("{stem}_{}_{:0width$}.svg", view.as_str(), s.l),
                canvas.render(export, s),
            )
        })
        .collect())
}
