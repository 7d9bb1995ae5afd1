//! Acceptance checks. Runs as a plain binary so each criterion prints one
//! PASS/FAIL line; exits non-zero when any criterion fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tetherplan::ams::{candidate_positions, nexti, nexti_order, SamplingConfig};
use tetherplan::bench::{run_benchmark, run_suite, Mode, Outcome};
use tetherplan::cable::{required_cable_length, segment_slider_source, segment_tool_slider, CableState};
use tetherplan::export::{replay, verify, StepAudit, TrajectoryExport};
use tetherplan::geometry::{
    angle_between, pose, segment_capsule_distance, segment_segment_distance, z_axis, Capsule, Pose, Rotation, Segment,
    Vec3,
};
use tetherplan::kinematics::{pose_error, solve_ik, Hand, IkConfig};
use tetherplan::scenario::{default_scenario, parse_scenario, Scenario};
use tetherplan::tms::Action;

const OMEGA: f64 = 0.325;
const BUDGET_S: f64 = 120.0;

struct Check {
    id: u32,
    pass: bool,
    detail: String,
}

fn check(id: u32, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        id,
        pass,
        detail: detail.into(),
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
    let axis = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    if axis.norm() < 1e-6 {
        return Rotation::identity();
    }
    Rotation::from_scaled_axis(axis.normalize() * rng.gen_range(0.0..std::f64::consts::PI))
}

fn random_point(rng: &mut ChaCha8Rng, half: f64) -> Vec3 {
    Vec3::new(rng.gen_range(-half..half), rng.gen_range(-half..half), rng.gen_range(-half..half))
}

fn candidates() -> Check {
    let started = Instant::now();
    let cfg = SamplingConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_norm: f64 = 0.0;
    let mut worst_angle: f64 = 0.0;
    let mut blocks_ok = cfg.candidate_count() == 13;
    for _ in 0..200 {
        let frame = pose(random_point(&mut rng, 1.0), random_rotation(&mut rng));
        let t = frame.translation.vector;
        let z = z_axis(&frame.rotation);
        let cands = candidate_positions(&frame, &cfg);
        blocks_ok &= cands.len() == 13;
        for (k, (i, p)) in cands.iter().enumerate() {
            blocks_ok &= *i == k;
            let lambda = p - t;
            worst_norm = worst_norm.max((lambda.norm() - OMEGA).abs());
            let angle = angle_between(&lambda, &z).to_degrees();
            let expected = match k {
                0 => 0.0,
                1..=6 => 30.0,
                _ => 60.0,
            };
            worst_angle = worst_angle.max((angle - expected).abs());
        }
        // Within a block, consecutive azimuths step by 60 degrees about the tool z axis.
        for block in [1..7, 7..13] {
            let idx: Vec<usize> = block.collect();
            for w in idx.windows(2) {
                let a = cands[w[0]].1 - t;
                let b = cands[w[1]].1 - t;
                let pa = a - z * a.dot(&z);
                let pb = b - z * b.dot(&z);
                let turn = pa.cross(&pb).dot(&z).atan2(pa.dot(&pb)).to_degrees();
                blocks_ok &= (turn - 60.0).abs() < 1e-9;
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    check(
        1,
        blocks_ok && worst_norm <= 1e-12 && worst_angle <= 1e-9 && elapsed < 1.0,
        format!(
            "13 candidates in blocks; max | |λ| - ω | = {worst_norm:.2e}, max angle error = {worst_angle:.2e} deg, {elapsed:.3} s"
        ),
    )
}

fn cable_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let t = random_point(&mut rng, 2.0);
        let s = random_point(&mut rng, 2.0);
        let h = random_point(&mut rng, 2.0);
        let b = random_point(&mut rng, 0.2);
        let lhs = segment_tool_slider(&s, &t) + segment_slider_source(&h, &s, &b);
        worst = worst.max((lhs - (h + b - t)).amax());
    }
    check(2, worst <= 1e-12, format!("1000 random cases, max component error {worst:.2e}"))
}

fn sample_segment(s: &Segment, pitch: f64) -> Vec<Vec3> {
    let n = (s.length() / pitch).ceil().max(1.0) as usize;
    (0..=n).map(|k| s.point_at(k as f64 / n as f64)).collect()
}

fn oracle_distance(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter()
        .flat_map(|p| b.iter().map(move |q| (p - q).norm()))
        .fold(f64::INFINITY, f64::min)
}

fn geometry_oracle() -> Check {
    let started = Instant::now();
    let pitch = 0.005;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_ss: f64 = 0.0;
    for _ in 0..500 {
        let s1 = Segment::new(random_point(&mut rng, 0.5), random_point(&mut rng, 0.5));
        let s2 = Segment::new(random_point(&mut rng, 0.5), random_point(&mut rng, 0.5));
        let exact = segment_segment_distance(&s1, &s2);
        let dense = oracle_distance(&sample_segment(&s1, pitch), &sample_segment(&s2, pitch));
        worst_ss = worst_ss.max((exact - dense).abs());
    }
    let mut worst_sc: f64 = 0.0;
    for _ in 0..200 {
        let s = Segment::new(random_point(&mut rng, 0.5), random_point(&mut rng, 0.5));
        let c = Capsule::new(random_point(&mut rng, 0.5), random_point(&mut rng, 0.5), rng.gen_range(0.01..0.1));
        let exact = segment_capsule_distance(&s, &c).distance;
        let dense = (oracle_distance(&sample_segment(&s, pitch), &sample_segment(&c.axis, pitch)) - c.radius).max(0.0);
        worst_sc = worst_sc.max((exact - dense).abs());
    }
    let elapsed = started.elapsed().as_secs_f64();
    check(
        3,
        worst_ss <= 2.0 * pitch && worst_sc <= 2.0 * pitch && elapsed < 30.0,
        format!(
            "pitch {pitch} m; max deviation segment-segment {worst_ss:.2e}, segment-capsule {worst_sc:.2e}, {elapsed:.2} s"
        ),
    )
}

fn inverse_kinematics(sc: &Scenario) -> Check {
    let started = Instant::now();
    let cfg = IkConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut lines = Vec::new();
    let mut pass = true;
    for (robot, name) in [(&sc.master, "master"), (&sc.assistant, "assistant")] {
        for hand in [Hand::Left, Hand::Right] {
            let arm = robot.arm(hand);
            let mut solved = 0;
            let mut bad = 0;
            for _ in 0..200 {
                let q = arm.random_configuration(&mut rng);
                let target: Pose = arm.gripper_pose(&q).expect("valid configuration");
                if let Ok(sol) = solve_ik(arm, &target, robot.home(hand), &cfg, &mut rng) {
                    let (ep, er) = pose_error(&target, &arm.gripper_pose(&sol).expect("valid solution"));
                    if ep <= 1e-3 && er <= 1e-2 && arm.within_limits(&sol) {
                        solved += 1;
                    } else {
                        bad += 1;
                    }
                }
            }
            pass &= solved >= 190 && bad == 0;
            lines.push(format!("{name}.{hand} {solved}/200"));
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    check(4, pass && elapsed < 60.0, format!("{}, {elapsed:.2} s", lines.join(", ")))
}

fn nexti_permutations() -> Check {
    let n = SamplingConfig::default().candidate_count();
    let mut pass = n == 13;
    for i_last in 0..n {
        let mut seen = Vec::new();
        let mut current = None;
        while let Some(i) = nexti(i_last, current, n) {
            seen.push(i);
            current = Some(i);
            if seen.len() > n {
                break;
            }
        }
        let mut sorted = seen.clone();
        sorted.sort_unstable();
        pass &= seen.first() == Some(&i_last) && sorted == (0..n).collect::<Vec<_>>() && seen == nexti_order(i_last, n);
    }
    check(5, pass, format!("{n} starting indices, each visiting every candidate once"))
}

struct Runs {
    ams: Vec<(String, TrajectoryExport, f64)>,
    tms: Vec<(String, TrajectoryExport, f64)>,
}

fn replayed_events(export: &TrajectoryExport) -> Option<usize> {
    let text = export.to_json();
    let back = TrajectoryExport::from_json(&text).ok()?;
    if !verify(&back).ok()? {
        return None;
    }
    Some(replay(&back).ok()?.iter().map(StepAudit::total).sum())
}

fn table(sc: &Scenario) -> (Check, Runs) {
    let seed = sc.params.seed;
    let mut runs = Runs {
        ams: Vec::new(),
        tms: Vec::new(),
    };
    let mut pass = sc.benchmarks.len() == 5;
    let mut cells = Vec::new();
    for b in &sc.benchmarks {
        let ams = run_benchmark(sc, b, Mode::TmsAms, seed, BUDGET_S);
        let tms = run_benchmark(sc, b, Mode::Tms, seed, BUDGET_S);
        let ams_events = replayed_events(&ams.export);
        let tms_events = replayed_events(&tms.export);
        let ok_ams = ams.result.outcome == Outcome::Success
            && ams_events == Some(0)
            && ams.result.wall_time_s <= BUDGET_S;
        let ok_tms = tms.result.outcome == Outcome::SuccessWithCableCollisions
            && tms_events.is_some_and(|n| n >= 1 && n == tms.result.collisions)
            && tms.result.wall_time_s <= BUDGET_S;
        pass &= ok_ams && ok_tms;
        cells.push(format!(
            "{}: tms {} ({} events, {:.1} s) tms+ams {} ({} events, {:.1} s)",
            b.id,
            tms.result.outcome.mark(),
            tms_events.map_or("?".into(), |n| n.to_string()),
            tms.result.wall_time_s,
            ams.result.outcome.mark(),
            ams_events.map_or("?".into(), |n| n.to_string()),
            ams.result.wall_time_s,
        ));
        runs.ams.push((b.id.clone(), ams.export, ams.result.wall_time_s));
        runs.tms.push((b.id.clone(), tms.export, tms.result.wall_time_s));
    }
    (check(6, pass, cells.join("; ")), runs)
}

fn handovers(runs: &Runs) -> Check {
    let mut pass = true;
    let mut cells = Vec::new();
    for (id, export, _) in runs.ams.iter().chain(&runs.tms) {
        if !export.goals.iter().any(|g| *g == 4 || *g == 5) {
            continue;
        }
        let handover_actions = export
            .steps
            .iter()
            .filter(|s| matches!(s.action, Action::HandoverGive | Action::HandoverTake))
            .count();
        let placements = export.steps.iter().filter(|s| s.action == Action::Release).count();
        pass &= handover_actions + placements >= 1;
        cells.push(format!("{id}/{}: {} handover steps, {placements} releases", export.mode, handover_actions));
    }
    check(7, pass && !cells.is_empty(), cells.join("; "))
}

/// Steps from a release with no hand on the tool up to the step where a hand
/// grips it again, read from the export alone.
fn released_steps(export: &TrajectoryExport) -> Vec<usize> {
    let mut out = Vec::new();
    let mut open = false;
    for s in &export.steps {
        if !open && s.action == Action::Release && s.holds.is_empty() {
            open = true;
        }
        if open {
            out.push(s.l);
            if !s.holds.is_empty() {
                open = false;
            }
        }
    }
    out
}

fn policies(runs: &Runs, pulley: &Scenario) -> Check {
    let mut pass = true;
    let mut covered = 0;
    let mut total = 0;
    for (_, export, _) in &runs.ams {
        for l in released_steps(export) {
            total += 1;
            if export.steps[l].cable_hold.is_some() {
                covered += 1;
            } else {
                pass = false;
            }
        }
    }
    pass &= total > 0;
    let mut worst: f64 = 0.0;
    let mut pulley_steps = 0;
    for b in &pulley.benchmarks {
        let run = run_benchmark(pulley, b, Mode::TmsAms, pulley.params.seed, BUDGET_S);
        pass &= run.result.outcome == Outcome::Success;
        let eps = match pulley.gadget.kind {
            tetherplan::cable::GadgetKind::Pulley { threshold, .. } => threshold,
            _ => 0.0,
        };
        for s in &run.export.steps {
            pulley_steps += 1;
            let slider = s.slider.to_state();
            let state = CableState::new(Vec3::from(s.cable.t), &slider, Vec3::from(s.cable.h));
            let required = required_cable_length(&state);
            match &s.pulley {
                Some(p) => {
                    let gap = (required - p.outside_length).abs();
                    worst = worst.max(gap);
                    pass &= gap <= eps + 1e-12 && (p.required - required).abs() <= 1e-12;
                }
                None => pass = false,
            }
        }
    }
    pass &= pulley_steps > 0;
    check(
        8,
        pass,
        format!(
            "balancer: {covered}/{total} released steps hold the cable; pulley: {pulley_steps} steps, max |required - L_out| = {worst:.4} m"
        ),
    )
}

fn determinism(sc: &Scenario, runs: &Runs) -> Check {
    let b = &sc.benchmarks[0];
    let again = run_benchmark(sc, b, Mode::TmsAms, sc.params.seed, BUDGET_S);
    let first = &runs.ams[0].1;
    let exports_equal = again.export.to_json() == first.to_json();
    let mut single = sc.clone();
    single.benchmarks.truncate(2);
    let r1 = run_suite(&single, &Mode::ALL, sc.params.seed, 1, BUDGET_S);
    let r2 = run_suite(&single, &Mode::ALL, sc.params.seed, 1, BUDGET_S);
    let reports_equal = r1.to_json() == r2.to_json() && r1.to_text() == r2.to_text();
    check(
        9,
        exports_equal && reports_equal,
        format!("export bytes equal: {exports_equal}; report bytes equal: {reports_equal}"),
    )
}

fn persistence(open: &Scenario) -> Check {
    let mut pass = open.environment.is_empty() && !open.benchmarks.is_empty();
    let mut cells = Vec::new();
    for b in &open.benchmarks {
        let run = run_benchmark(open, b, Mode::TmsAms, open.params.seed, BUDGET_S);
        let idx: Vec<usize> = run.export.steps.iter().filter_map(|s| s.candidate).collect();
        let constant = !idx.is_empty() && idx.iter().all(|i| *i == idx[0]);
        pass &= run.result.outcome == Outcome::Success && constant && idx.len() == run.export.steps.len();
        cells.push(format!(
            "{}: {} steps, candidate {}",
            b.id,
            idx.len(),
            if constant { idx[0].to_string() } else { "varies".into() }
        ));
    }
    check(10, pass, cells.join("; "))
}

fn load(text: &str) -> Scenario {
    parse_scenario(text).expect("shipped scenario loads").scenario
}

fn main() {
    let sc = default_scenario();
    let pulley = load(include_str!("../../../scenarios/pulley.json"));
    let open = load(include_str!("../../../scenarios/open.json"));
    let mut results = vec![
        candidates(),
        cable_identity(),
        geometry_oracle(),
        inverse_kinematics(&sc),
        nexti_permutations(),
    ];
    let (c6, runs) = table(&sc);
    results.push(c6);
    results.push(handovers(&runs));
    results.push(policies(&runs, &pulley));
    results.push(determinism(&sc, &runs));
    results.push(persistence(&open));
    let mut failed = 0;
    for c in &results {
        println!("criterion {:>2}: {}  {}", c.id, if c.pass { "PASS" } else { "FAIL" }, c.detail);
        if !c.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
