use proptest::prelude::*;
use tetherplan::geometry::*;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn rotation() -> impl Strategy<Value = Rotation> {
    (-180.0..180.0, -90.0..90.0, -180.0..180.0).prop_map(|(r, p, y)| rotation_from_rpy_deg([r, p, y]))
}

fn segment() -> impl Strategy<Value = Segment> {
    (vec3(1.0), vec3(1.0)).prop_map(|(a, b)| Segment::new(a, b))
}

fn sampled_distance(s1: &Segment, s2: &Segment, n: usize) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..=n {
        for j in 0..=n {
            let d = (s1.point_at(i as f64 / n as f64) - s2.point_at(j as f64 / n as f64)).norm();
            best = best.min(d);
        }
    }
    best
}

proptest! {
    #[test]
    fn segment_distance_is_symmetric(s1 in segment(), s2 in segment()) {
        let d12 = segment_segment_distance(&s1, &s2);
        let d21 = segment_segment_distance(&s2, &s1);
        prop_assert!((d12 - d21).abs() < 1e-12);
        prop_assert!(d12 >= 0.0);
    }

    #[test]
    fn segment_distance_never_exceeds_sampled(s1 in segment(), s2 in segment()) {
        let exact = segment_segment_distance(&s1, &s2);
        let sampled = sampled_distance(&s1, &s2, 40);
        prop_assert!(exact <= sampled + 1e-12);
        prop_assert!(sampled - exact < 0.1);
    }

    #[test]
    fn capsule_distance_subtracts_radius(s in segment(), axis in segment(), r in 0.01..0.3f64) {
        let c = Capsule::new(axis.a, axis.b, r);
        let raw = segment_segment_distance(&s, &axis) - r;
        let d = segment_capsule_distance(&s, &c);
        prop_assert_eq!(d.penetrating, raw < 0.0);
        prop_assert!((d.distance - raw.max(0.0)).abs() < 1e-12);
    }

    #[test]
    fn segment_obb_distance_bounds_point_distances(s in segment(), c in vec3(0.5), rot in rotation(),
                                                   h in (0.05..0.4f64, 0.05..0.4f64, 0.05..0.4f64)) {
        let obb = Obb::new(pose(c, rot), Vec3::new(h.0, h.1, h.2));
        let d = segment_obb_distance(&s, &obb);
        for i in 0..=20 {
            let p = s.point_at(i as f64 / 20.0);
            prop_assert!(d <= point_obb_distance(&p, &obb) + 1e-9);
        }
    }

    #[test]
    fn slerp_hits_endpoints(q0 in rotation(), q1 in rotation()) {
        prop_assert!(rotation_distance(&slerp(&q0, &q1, 0.0), &q0) < 1e-7);
        prop_assert!(rotation_distance(&slerp(&q0, &q1, 1.0), &q1) < 1e-7);
        let mid = slerp(&q0, &q1, 0.5);
        let total = rotation_distance(&q0, &q1);
        prop_assert!((rotation_distance(&q0, &mid) - total / 2.0).abs() < 1e-6);
    }

    #[test]
    fn compose_is_associative(a in (vec3(2.0), rotation()), b in (vec3(2.0), rotation()),
                              c in (vec3(2.0), rotation()), p in vec3(1.0)) {
        let (a, b, c) = (pose(a.0, a.1), pose(b.0, b.1), pose(c.0, c.1));
        let left = compose(&compose(&a, &b), &c);
        let right = compose(&a, &compose(&b, &c));
        prop_assert!((transform_point(&left, &p) - transform_point(&right, &p)).norm() < 1e-12);
    }

    #[test]
    fn angle_between_is_in_range(a in vec3(1.0), b in vec3(1.0)) {
        prop_assume!(a.norm() > 1e-3 && b.norm() > 1e-3);
        let t = angle_between(&a, &b);
        prop_assert!((0.0..=std::f64::consts::PI).contains(&t));
        prop_assert!((t - angle_between(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn outside_ball_pieces_stay_outside(s in segment(), c in vec3(1.0), r in 0.05..0.8f64) {
        let pieces = s.outside_ball(&c, r);
        let kept: f64 = pieces.iter().map(Segment::length).sum();
        prop_assert!(kept <= s.length() + 1e-12);
        for p in &pieces {
            for i in 0..=10 {
                let x = p.point_at(i as f64 / 10.0);
                prop_assert!((x - c).norm() >= r - 1e-9);
            }
        }
        for i in 0..=50 {
            let x = s.point_at(i as f64 / 50.0);
            if (x - c).norm() > r + 1e-9 {
                let covered = pieces.iter().any(|p| segment_segment_distance(p, &Segment::new(x, x)) < 1e-9);
                prop_assert!(covered);
            }
        }
    }
}

#[test]
fn parallel_segments_report_gap() {
    let s1 = Segment::new(Vec3::zeros(), Vec3::x());
    let s2 = Segment::new(Vec3::new(0.5, 0.3, 0.0), Vec3::new(2.0, 0.3, 0.0));
    assert!((segment_segment_distance(&s1, &s2) - 0.3).abs() < 1e-15);
}

#[test]
fn degenerate_segments_act_as_points() {
    let p = Segment::new(Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 1.0));
    let s = Segment::new(Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0));
    assert!((segment_segment_distance(&p, &s) - 1.0).abs() < 1e-15);
    assert_eq!(segment_segment_distance(&p, &p), 0.0);
}

#[test]
fn segment_through_box_has_zero_distance() {
    let obb = Obb::axis_aligned(Vec3::zeros(), Vec3::new(0.1, 0.1, 0.1));
    let s = Segment::new(Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0));
    assert_eq!(segment_obb_distance(&s, &obb), 0.0);
    let above = Segment::new(Vec3::new(-1.0, 0.0, 0.3), Vec3::new(1.0, 0.0, 0.3));
    assert!((segment_obb_distance(&above, &obb) - 0.2).abs() < 1e-12);
}
