use std::sync::OnceLock;

use tetherplan::bench::{run_benchmark, BenchRun, Mode, Outcome};
use tetherplan::export::{dense_csv, dense_rows, replay, verify, ExportError, TrajectoryExport};
use tetherplan::scenario::{default_scenario, parse_scenario};
use tetherplan::svg::{render_all, render_step, View};

fn run(mode: Mode) -> &'static BenchRun {
    static TMS: OnceLock<BenchRun> = OnceLock::new();
    static AMS: OnceLock<BenchRun> = OnceLock::new();
    let cell = match mode {
        Mode::Tms => &TMS,
        Mode::TmsAms => &AMS,
    };
    cell.get_or_init(|| {
        let sc = default_scenario();
        let b = sc.benchmarks[0].clone();
        run_benchmark(&sc, &b, mode, sc.params.seed, 120.0)
    })
}

#[test]
fn export_survives_json_round_trip() {
    for mode in Mode::ALL {
        let export = &run(mode).export;
        let text = export.to_json();
        let back = TrajectoryExport::from_json(&text).unwrap();
        assert_eq!(&back, export);
        assert_eq!(back.to_json(), text);
        assert!(verify(&back).unwrap(), "{mode} export does not replay");
    }
}

#[test]
fn modes_differ_in_cable_events() {
    let tms = &run(Mode::Tms).export;
    let ams = &run(Mode::TmsAms).export;
    assert_eq!(ams.outcome, Outcome::Success);
    assert_eq!(ams.collision_count, 0);
    assert_eq!(tms.outcome, Outcome::SuccessWithCableCollisions);
    assert!(tms.collision_count > 0);
    let replayed: usize = replay(tms).unwrap().iter().map(|a| a.total()).sum();
    assert_eq!(replayed, tms.collision_count);
}

#[test]
fn tampered_events_fail_verification() {
    let mut export = run(Mode::Tms).export.clone();
    let k = export.steps.iter().position(|s| !s.collisions.is_empty()).unwrap();
    export.steps[k].collisions.clear();
    assert!(!verify(&export).unwrap());

    let mut export = run(Mode::Tms).export.clone();
    export.collision_count += 1;
    assert!(!verify(&export).unwrap());
}

#[test]
fn malformed_exports_are_rejected() {
    let export = &run(Mode::TmsAms).export;
    let mut v: serde_json::Value = serde_json::from_str(&export.to_json()).unwrap();
    v["format"] = "other/9".into();
    assert!(matches!(TrajectoryExport::from_json(&v.to_string()), Err(ExportError::Format(_))));

    let mut v: serde_json::Value = serde_json::from_str(&export.to_json()).unwrap();
    v["steps"][1]["l"] = 7.into();
    assert!(matches!(TrajectoryExport::from_json(&v.to_string()), Err(ExportError::StepIndex(1))));

    let mut v: serde_json::Value = serde_json::from_str(&export.to_json()).unwrap();
    v["steps"][0]["master"]["left"] = serde_json::json!([0.0]);
    let bad = TrajectoryExport::from_json(&v.to_string()).unwrap();
    assert!(matches!(replay(&bad), Err(ExportError::Step(0, _))));

    let err = TrajectoryExport::from_json("{\"format\": 3}").unwrap_err();
    assert!(matches!(err, ExportError::Parse { .. }));
}

#[test]
fn embedded_scenario_round_trips() {
    let export = &run(Mode::TmsAms).export;
    let sc = export.resolve_scenario().unwrap();
    let again = parse_scenario(&sc.to_json()).unwrap().scenario;
    assert_eq!(again.file, sc.file);
    assert_eq!(sc.file, default_scenario().file);
}

#[test]
fn dense_sequence_covers_every_step() {
    let export = &run(Mode::TmsAms).export;
    let rows = dense_rows(export);
    let expected: usize = export
        .steps
        .iter()
        .map(|s| {
            1 + s.substeps.len() + s.cable_hold.as_ref().map_or(0, |h| h.approach.len() + h.retreat.len())
        })
        .sum();
    assert_eq!(rows.len(), expected);
    assert!(rows.windows(2).all(|w| w[0].l <= w[1].l));
    let csv = dense_csv(export);
    assert_eq!(csv.lines().count(), rows.len() + 1);
}

#[test]
fn svg_has_two_cable_polylines() {
    let export = &run(Mode::Tms).export;
    let k = export.steps.iter().position(|s| !s.collisions.is_empty()).unwrap();
    for view in View::ALL {
        let svg = render_step(export, k, view).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline class=\"cable").count(), 2);
        assert!(svg.contains("class=\"cable collision\""));
    }
    assert!(render_step(export, export.steps.len(), View::Top).is_err());
}

#[test]
fn svg_file_names_are_zero_padded() {
    let export = &run(Mode::TmsAms).export;
    let files = render_all(export, View::Side, "a").unwrap();
    assert_eq!(files.len(), export.steps.len());
    assert_eq!(files[0].0, "a_side_0000.svg");
    let mut names: Vec<&String> = files.iter().map(|(n, _)| n).collect();
    let sorted = {
        let mut s = names.clone();
        s.sort();
        s
    };
    assert_eq!(names, sorted);
    names.dedup();
    assert_eq!(names.len(), files.len());
}
