use std::path::Path;
use std::process::{Command, Output};

fn tetherplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tetherplan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .display()
        .to_string()
}

fn plan(dir: &Path, mode: &str) -> (Output, String) {
    let path = dir.join(format!("{}.json", mode.replace('+', "_")));
    let out = tetherplan(&["plan", "--task", "i", "--mode", mode, "--out", path.to_str().unwrap()]);
    (out, path.display().to_string())
}

#[test]
fn plan_exit_codes_follow_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let (ams, ams_path) = plan(dir.path(), "tms+ams");
    assert_eq!(code(&ams), 0, "{}", String::from_utf8_lossy(&ams.stderr));
    let (tms, tms_path) = plan(dir.path(), "tms");
    assert_eq!(code(&tms), 2);
    for path in [&ams_path, &tms_path] {
        let v = tetherplan(&["validate", "--trajectory", path]);
        assert_eq!(code(&v), 0);
        assert!(String::from_utf8_lossy(&v.stdout).starts_with("ok:"));
    }
}

#[test]
fn plan_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (_, pa) = plan(a.path(), "tms");
    let (_, pb) = plan(b.path(), "tms");
    assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
}

#[test]
fn bad_inputs_exit_with_io_code() {
    assert_eq!(code(&tetherplan(&["plan", "--task", "nope"])), 3);
    assert_eq!(code(&tetherplan(&["plan", "--task", "i", "--scenario", "/no/such.json"])), 3);
    assert_eq!(code(&tetherplan(&["validate", "--trajectory", "/no/such.json"])), 3);
    assert_eq!(code(&tetherplan(&["export-svg", "--trajectory", "/no/such.json"])), 3);
}

#[test]
fn validate_reports_scenarios() {
    assert_eq!(code(&tetherplan(&["validate", "--scenario", &scenario("default.json")])), 0);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scenario("default.json")).unwrap()).unwrap();
    v["planner"]["joint_step_deg"] = (-1.0).into();
    std::fs::write(&bad, v.to_string()).unwrap();
    let out = tetherplan(&["validate", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("joint_step_deg"));
}

#[test]
fn tampered_trajectory_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let (_, path) = plan(dir.path(), "tms");
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    v["collision_count"] = 0.into();
    std::fs::write(&path, v.to_string()).unwrap();
    assert_eq!(code(&tetherplan(&["validate", "--trajectory", &path])), 1);
}

#[test]
fn exports_svg_and_dense_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let (_, path) = plan(dir.path(), "tms+ams");
    let svg = dir.path().join("one.svg");
    let out = tetherplan(&["export-svg", "--trajectory", &path, "--step", "3", "--view", "front", "--out", svg.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<polyline class=\"cable").count(), 2);

    let frames = dir.path().join("frames");
    let out = tetherplan(&["export-svg", "--trajectory", &path, "--step", "all", "--out", frames.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(frames.join("i_tms_ams_top_0000.svg").exists());

    assert_eq!(code(&tetherplan(&["export-svg", "--trajectory", &path, "--step", "99999"])), 1);

    let csv = dir.path().join("dense.csv");
    let out = tetherplan(&["export-traj", "--trajectory", &path, "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(std::fs::read_to_string(&csv).unwrap().lines().count() > 1);
    let json = tetherplan(&["export-traj", "--trajectory", &path, "--format", "json"]);
    let rows: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert!(rows.as_array().unwrap().len() > 1);
}

#[test]
fn bench_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = tetherplan(&[
        "bench",
        "--scenario",
        &scenario("open.json"),
        "--mode",
        "tms",
        "--repeats",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.txt", "report.json", "timings.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let text = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert_eq!(text, String::from_utf8_lossy(&out.stdout));
}
