use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tetherplan::kinematics::*;
use tetherplan::scenario::default_scenario;

fn joints(n: usize) -> impl Strategy<Value = JointVector> {
    proptest::collection::vec(-3.0..3.0f64, n).prop_map(JointVector)
}

proptest! {
    #[test]
    fn linear_motion_respects_step(q0 in joints(7), q1 in joints(7), step in 0.01..0.5f64) {
        let path = linear_joint_motion(&q0, &q1, step);
        prop_assert_eq!(path.first().unwrap(), &q0);
        prop_assert_eq!(path.last().unwrap(), &q1);
        for w in path.windows(2) {
            prop_assert!(w[0].max_delta(&w[1]) <= step + 1e-12);
        }
        let expected = (q0.max_delta(&q1) / step).ceil() as usize + 1;
        prop_assert!(path.len() <= expected.max(1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ik_recovers_fk_targets(seed in 0u64..1000, left in any::<bool>()) {
        let sc = default_scenario();
        let hand = if left { Hand::Left } else { Hand::Right };
        let arm = sc.master.arm(hand);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = arm.random_configuration(&mut rng);
        let target = forward_kinematics(arm, &q).unwrap().gripper;
        let cfg = IkConfig::default();
        if let Ok(sol) = solve_ik(arm, &target, sc.master.home(hand), &cfg, &mut rng) {
            prop_assert!(arm.within_limits(&sol));
            let reached = arm.gripper_pose(&sol).unwrap();
            let (ep, er) = pose_error(&target, &reached);
            prop_assert!(ep <= cfg.tol_pos && er <= cfg.tol_rot);
        }
    }
}

#[test]
fn home_configurations_are_within_limits() {
    let sc = default_scenario();
    for robot in [&sc.master, &sc.assistant] {
        for hand in [Hand::Left, Hand::Right] {
            assert!(robot.arm(hand).within_limits(robot.home(hand)));
        }
    }
}

#[test]
fn wrong_joint_count_is_rejected() {
    let sc = default_scenario();
    let arm = sc.master.arm(Hand::Left);
    assert!(forward_kinematics(arm, &JointVector::zeros(arm.dof() + 1)).is_err());
}

#[test]
fn far_target_is_unreachable() {
    let sc = default_scenario();
    let arm = sc.master.arm(Hand::Right);
    let far = tetherplan::geometry::pose(
        arm.shoulder() + tetherplan::geometry::Vec3::x() * (arm.reach() + 1.0),
        tetherplan::geometry::Rotation::identity(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let err = solve_ik(arm, &far, sc.master.home(Hand::Right), &IkConfig::default(), &mut rng).unwrap_err();
    assert!(matches!(err, IkError::Unreachable { .. }));
}
