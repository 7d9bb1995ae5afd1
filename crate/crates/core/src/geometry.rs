//! Vector and rotation algebra, rigid transforms, and proximity queries
//! between segments, capsules and oriented boxes.

use nalgebra::{Isometry3, Point3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Rotation = UnitQuaternion<f64>;
pub type Pose = Isometry3<f64>;

/// Default clearance below which two bodies count as colliding.
pub const DEFAULT_CLEARANCE: f64 = 0.005;

pub fn pose(position: Vec3, rotation: Rotation) -> Pose {
    Isometry3::from_parts(Translation3::from(position), rotation)
}

pub fn transform_point(p: &Pose, v: &Vec3) -> Vec3 {
    (p * Point3::from(*v)).coords
}

pub fn compose(outer: &Pose, inner: &Pose) -> Pose {
    outer * inner
}

/// Rotation from roll/pitch/yaw in degrees, applied as `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn rotation_from_rpy_deg(rpy: [f64; 3]) -> Rotation {
    UnitQuaternion::from_euler_angles(
        rpy[0].to_radians(),
        rpy[1].to_radians(),
        rpy[2].to_radians(),
    )
}

/// World-frame z axis of a rotation.
pub fn z_axis(r: &Rotation) -> Vec3 {
    r * Vec3::z()
}

/// Angle between two non-zero vectors in radians, in `[0, pi]`.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    // atan2 keeps precision near 0 and pi where acos does not.
    a.cross(b).norm().atan2(a.dot(b))
}

/// Spherical linear interpolation along the shortest arc.
pub fn slerp(q0: &Rotation, q1: &Rotation, u: f64) -> Rotation {
    let u = u.clamp(0.0, 1.0);
    let a = q0.as_ref().coords;
    let mut b = q1.as_ref().coords;
    let mut dot = a.dot(&b);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    let coords = if dot > 1.0 - 1e-10 {
        a * (1.0 - u) + b * u
    } else {
        let theta = dot.min(1.0).acos();
        let s = theta.sin();
        a * (((1.0 - u) * theta).sin() / s) + b * ((u * theta).sin() / s)
    };
    UnitQuaternion::new_normalize(Quaternion::from(coords))
}

/// Interpolates position linearly and rotation by [`slerp`].
pub fn interpolate_pose(p0: &Pose, p1: &Pose, u: f64) -> Pose {
    let t = p0.translation.vector.lerp(&p1.translation.vector, u);
    pose(t, slerp(&p0.rotation, &p1.rotation, u))
}

/// Rotation angle between two orientations, radians.
pub fn rotation_distance(a: &Rotation, b: &Rotation) -> f64 {
    a.angle_to(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Vec3,
    pub b: Vec3,
}

impl Segment {
    pub fn new(a: Vec3, b: Vec3) -> Self {
        Self { a, b }
    }

    pub fn point_at(&self, u: f64) -> Vec3 {
        self.a + (self.b - self.a) * u
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    pub fn transformed(&self, p: &Pose) -> Segment {
        Segment::new(transform_point(p, &self.a), transform_point(p, &self.b))
    }

    /// Parts of the segment lying outside the ball `(center, radius)`.
    pub fn outside_ball(&self, center: &Vec3, radius: f64) -> Vec<Segment> {
        let d = self.b - self.a;
        let f = self.a - center;
        let aa = d.dot(&d);
        if aa < 1e-18 {
            return if f.norm() >= radius { vec![*self] } else { Vec::new() };
        }
        let bb = 2.0 * f.dot(&d);
        let cc = f.dot(&f) - radius * radius;
        let disc = bb * bb - 4.0 * aa * cc;
        if disc <= 0.0 {
            return vec![*self];
        }
        let sq = disc.sqrt();
        let t0 = (-bb - sq) / (2.0 * aa);
        let t1 = (-bb + sq) / (2.0 * aa);
        let mut out = Vec::with_capacity(2);
        if t0 > 0.0 {
            out.push(Segment::new(self.a, self.point_at(t0.min(1.0))));
        }
        if t1 < 1.0 {
            out.push(Segment::new(self.point_at(t1.max(0.0)), self.b));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capsule {
    pub axis: Segment,
    pub radius: f64,
}

impl Capsule {
    pub fn new(a: Vec3, b: Vec3, radius: f64) -> Self {
        debug_assert!(radius > 0.0);
        Self {
            axis: Segment::new(a, b),
            radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obb {
    pub center: Pose,
    pub half_extents: Vec3,
}

impl Obb {
    pub fn new(center: Pose, half_extents: Vec3) -> Self {
        debug_assert!(half_extents.iter().all(|h| *h > 0.0));
        Self {
            center,
            half_extents,
        }
    }

    pub fn axis_aligned(center: Vec3, half_extents: Vec3) -> Self {
        Self::new(pose(center, Rotation::identity()), half_extents)
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let h = self.half_extents;
        let mut out = [Vec3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            *c = transform_point(&self.center, &Vec3::new(sx * h.x, sy * h.y, sz * h.z));
        }
        out
    }
}

/// Closest-point parameters `(s, t)` on `s1` and `s2`. Degenerate segments
/// collapse to points through parameter clamping.
pub fn closest_parameters(s1: &Segment, s2: &Segment) -> (f64, f64) {
    let d1 = s1.b - s1.a;
    let d2 = s2.b - s2.a;
    let r = s1.a - s2.a;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    const EPS: f64 = 1e-18;

    if a <= EPS && e <= EPS {
        return (0.0, 0.0);
    }
    if a <= EPS {
        return (0.0, (f / e).clamp(0.0, 1.0));
    }
    let c = d1.dot(&r);
    if e <= EPS {
        return ((-c / a).clamp(0.0, 1.0), 0.0);
    }
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    let mut s = if denom > EPS * a * e {
        ((b * f - c * e) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    (s, t)
}

pub fn segment_segment_distance(s1: &Segment, s2: &Segment) -> f64 {
    let (s, t) = closest_parameters(s1, s2);
    (s1.point_at(s) - s2.point_at(t)).norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceDistance {
    /// Distance to the surface, clamped at zero.
    pub distance: f64,
    pub penetrating: bool,
}

pub fn segment_capsule_distance(s: &Segment, c: &Capsule) -> SurfaceDistance {
    let raw = segment_segment_distance(s, &c.axis) - c.radius;
    SurfaceDistance {
        distance: raw.max(0.0),
        penetrating: raw < 0.0,
    }
}

pub fn capsule_capsule_distance(c1: &Capsule, c2: &Capsule) -> f64 {
    segment_segment_distance(&c1.axis, &c2.axis) - c1.radius - c2.radius
}

fn point_box_local_distance(p: &Vec3, h: &Vec3) -> f64 {
    let dx = (p.x.abs() - h.x).max(0.0);
    let dy = (p.y.abs() - h.y).max(0.0);
    let dz = (p.z.abs() - h.z).max(0.0);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Distance from a point to the box; zero inside.
pub fn point_obb_distance(p: &Vec3, obb: &Obb) -> f64 {
    let local = obb.center.inverse_transform_point(&Point3::from(*p)).coords;
    point_box_local_distance(&local, &obb.half_extents)
}

/// Distance from a segment to the box; zero when they intersect.
pub fn segment_obb_distance(s: &Segment, obb: &Obb) -> f64 {
    let a = obb.center.inverse_transform_point(&Point3::from(s.a)).coords;
    let b = obb.center.inverse_transform_point(&Point3::from(s.b)).coords;
    let h = obb.half_extents;
    if slab_intersects(&a, &b, &h) {
        return 0.0;
    }
    // Distance to a convex set is convex along the segment.
    let f = |u: f64| point_box_local_distance(&(a + (b - a) * u), &h);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    f1.min(f2).min(f(0.0)).min(f(1.0))
}

fn slab_intersects(a: &Vec3, b: &Vec3, h: &Vec3) -> bool {
    let d = b - a;
    let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if a[k].abs() > h[k] {
                return false;
            }
        } else {
            let inv = 1.0 / d[k];
            let mut ta = (-h[k] - a[k]) * inv;
            let mut tb = (h[k] - a[k]) * inv;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// Closed convex shapes used for bodies in the collision world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Capsule(Capsule),
    Obb(Obb),
}

impl Shape {
    /// Surface distance from a segment, negative for capsule penetration.
    pub fn segment_distance(&self, s: &Segment) -> f64 {
        match self {
            Shape::Capsule(c) => segment_segment_distance(s, &c.axis) - c.radius,
            Shape::Obb(o) => segment_obb_distance(s, o),
        }
    }

    /// Surface distance between a capsule and this shape.
    pub fn capsule_distance(&self, c: &Capsule) -> f64 {
        self.segment_distance(&c.axis) - c.radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn seg(a: [f64; 3], b: [f64; 3]) -> Segment {
        Segment::new(Vec3::from(a), Vec3::from(b))
    }

    #[test]
    fn parallel_segments_unit_offset() {
        let d = segment_segment_distance(&seg([0., 0., 0.], [1., 0., 0.]), &seg([0., 0., 1.], [1., 0., 1.]));
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn crossing_segments_touch() {
        let d = segment_segment_distance(&seg([-1., 0., 0.], [1., 0., 0.]), &seg([0., -1., 0.], [0., 1., 0.]));
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn skew_segments_midpoints() {
        let d = segment_segment_distance(
            &seg([0., 0., 0.], [1., 0., 0.]),
            &seg([0.5, -0.5, 0.3], [0.5, 0.5, 0.3]),
        );
        assert!((d - 0.3).abs() < 1e-12);
    }

    #[test]
    fn degenerate_segments_are_points() {
        let p = seg([0.2, 0.2, 0.2], [0.2, 0.2, 0.2]);
        let q = seg([0.2, 0.2, 0.7], [0.2, 0.2, 0.7]);
        assert!((segment_segment_distance(&p, &q) - 0.5).abs() < 1e-12);
        let line = seg([0., 0., 0.], [1., 0., 0.]);
        assert!((segment_segment_distance(&p, &line) - (0.08f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn capsule_distance_and_touching() {
        let c = Capsule::new(Vec3::new(0., 0., 0.), Vec3::new(1., 0., 0.), 0.2);
        let s = seg([0., 0., 1.], [1., 0., 1.]);
        let d = segment_capsule_distance(&s, &c);
        assert!((d.distance - 0.8).abs() < 1e-12 && !d.penetrating);
        let touching = seg([0., 0., 0.2], [1., 0., 0.2]);
        let d = segment_capsule_distance(&touching, &c);
        assert!(d.distance.abs() < 1e-12 && !d.penetrating);
        let inside = seg([0., 0., 0.1], [1., 0., 0.1]);
        let d = segment_capsule_distance(&inside, &c);
        assert_eq!(d.distance, 0.0);
        assert!(d.penetrating);
    }

    #[test]
    fn slerp_examples() {
        let q = rotation_from_rpy_deg([10., 20., 30.]);
        assert!(slerp(&q, &q, 0.5).angle_to(&q) < 1e-9);
        let id = Rotation::identity();
        let z90 = Rotation::from_axis_angle(&Vec3::z_axis(), FRAC_PI_2);
        let half = slerp(&id, &z90, 0.5);
        let z45 = Rotation::from_axis_angle(&Vec3::z_axis(), FRAC_PI_2 / 2.0);
        assert!(half.angle_to(&z45) < 1e-9);
        assert!(slerp(&id, &z90, 0.0).angle_to(&id) < 1e-12);
        assert!(slerp(&id, &z90, 1.0).angle_to(&z90) < 1e-12);
    }

    #[test]
    fn slerp_takes_short_arc() {
        let id = Rotation::identity();
        let z90 = Rotation::from_axis_angle(&Vec3::z_axis(), FRAC_PI_2);
        let flipped = UnitQuaternion::new_unchecked(-z90.into_inner());
        let half = slerp(&id, &flipped, 0.5);
        assert!(half.angle() < FRAC_PI_2 / 2.0 + 1e-9);
    }

    #[test]
    fn transform_examples() {
        let v = Vec3::new(0.3, -0.2, 0.9);
        assert_eq!(transform_point(&Pose::identity(), &v), v);
        let t = pose(Vec3::new(1., 2., 3.), Rotation::identity());
        assert_eq!(transform_point(&t, &Vec3::zeros()), Vec3::new(1., 2., 3.));
        let r = pose(Vec3::zeros(), Rotation::from_axis_angle(&Vec3::z_axis(), FRAC_PI_2));
        assert!((transform_point(&r, &Vec3::x()) - Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn obb_distances() {
        let b = Obb::axis_aligned(Vec3::zeros(), Vec3::new(0.5, 0.5, 0.5));
        assert_eq!(point_obb_distance(&Vec3::new(0.1, 0.1, 0.1), &b), 0.0);
        assert!((point_obb_distance(&Vec3::new(1.5, 0.0, 0.0), &b) - 1.0).abs() < 1e-12);
        assert_eq!(segment_obb_distance(&seg([-2., 0., 0.], [2., 0., 0.]), &b), 0.0);
        let above = seg([-2., 0., 1.0], [2., 0., 1.0]);
        assert!((segment_obb_distance(&above, &b) - 0.5).abs() < 1e-9);
        let diag = seg([1.5, 0.0, 0.0], [0.0, 1.5, 0.0]);
        // closest point of the segment is (0.75, 0.75, 0) against corner (0.5, 0.5)
        assert!((segment_obb_distance(&diag, &b) - (2.0f64 * 0.0625).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn outside_ball_splits() {
        let s = seg([-1., 0., 0.], [1., 0., 0.]);
        let parts = s.outside_ball(&Vec3::zeros(), 0.5);
        assert_eq!(parts.len(), 2);
        assert!((parts[0].b.x + 0.5).abs() < 1e-12);
        assert!((parts[1].a.x - 0.5).abs() < 1e-12);
        let tail = s.outside_ball(&Vec3::new(-1., 0., 0.), 0.5);
        assert_eq!(tail.len(), 1);
        assert!((tail[0].a.x + 0.5).abs() < 1e-12);
        assert!(s.outside_ball(&Vec3::zeros(), 5.0).is_empty());
        assert_eq!(s.outside_ball(&Vec3::new(0., 3., 0.), 1.0), vec![s]);
    }
}
