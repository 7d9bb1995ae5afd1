//! Benchmark runs in both planner modes and the summary table.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ams::{AmsError, AmsPlanner};
use crate::export::{build_export, failed_export, ExportHeader, TrajectoryExport};
use crate::scenario::{Benchmark, Scenario};
use crate::tms::TmsPlanner;
use crate::util::Deadline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    /// Master tool motion only; the slider rests below the cable source.
    #[serde(rename = "tms")]
    Tms,
    #[serde(rename = "tms+ams")]
    TmsAms,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Tms, Mode::TmsAms];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Tms => "tms",
            Mode::TmsAms => "tms+ams",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tms" => Ok(Mode::Tms),
            "tms+ams" => Ok(Mode::TmsAms),
            other => Err(format!("unknown mode {other:?}, expected tms or tms+ams")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    SuccessWithCableCollisions,
    Failure,
}

impl Outcome {
    pub fn mark(self) -> char {
        match self {
            Outcome::Success => '○',
            Outcome::SuccessWithCableCollisions => 'Δ',
            Outcome::Failure => '×',
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::SuccessWithCableCollisions => 2,
            Outcome::Failure => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub task: String,
    pub mode: Mode,
    pub seed: u64,
    pub outcome: Outcome,
    pub failure: Option<String>,
    pub collisions: usize,
    pub steps: usize,
    pub substeps: usize,
    pub handovers: usize,
    pub placements: usize,
    /// Tool motions planned, including the accepted one.
    pub attempts: usize,
    /// Planning time; not part of the deterministic report.
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct BenchRun {
    pub result: RunResult,
    pub export: TrajectoryExport,
}

/// Tool motions tried per run when the assistant finds no motion sequence.
pub const TOOL_ATTEMPTS: usize = 8;

/// Tool motion seed of attempt `k`; the first attempt uses `seed` itself.
pub fn tool_seed(seed: u64, k: usize) -> u64 {
    if k == 0 {
        seed
    } else {
        crate::util::derive_seed(seed, &[40, k as u64])
    }
}

/// Plans one benchmark within `budget_s` seconds and audits the result.
pub fn run_benchmark(scenario: &Scenario, b: &Benchmark, mode: Mode, seed: u64, budget_s: f64) -> BenchRun {
    let started = Instant::now();
    let deadline = Deadline::after_secs(budget_s);
    let header = ExportHeader {
        task: b.id.clone(),
        goals: b.goals.clone(),
        mode,
        seed,
    };
    let mut attempts = 0;
    let mut export = loop {
        let tms_seed = tool_seed(seed, attempts);
        attempts += 1;
        let tms = match TmsPlanner::new(scenario, tms_seed).plan(&b.goals, &deadline) {
            Ok(t) => t,
            Err(e) => break failed_export(scenario, header, format!("tool motion: {e}")),
        };
        if mode == Mode::Tms {
            break build_export(scenario, header, &tms, None);
        }
        match AmsPlanner::new(scenario, &tms.steps, seed).plan(&deadline) {
            Ok(ams) => break build_export(scenario, header, &tms, Some(&ams)),
            Err(e) if matches!(e, AmsError::Timeout) || attempts >= TOOL_ATTEMPTS || deadline.expired() => {
                break failed_export(scenario, header, format!("assistant motion: {e}"))
            }
            Err(e) => log::debug!("task {} attempt {attempts}: {e}; replanning the tool motion", b.id),
        }
    };
    let wall_time_s = started.elapsed().as_secs_f64();
    if wall_time_s > budget_s && export.outcome != Outcome::Failure {
        export = failed_export(
            scenario,
            ExportHeader {
                task: b.id.clone(),
                goals: b.goals.clone(),
                mode,
                seed,
            },
            format!("planning budget of {budget_s} s exceeded"),
        );
    }
    let result = RunResult {
        task: b.id.clone(),
        mode,
        seed,
        outcome: export.outcome,
        failure: export.failure.clone(),
        collisions: export.collision_count,
        steps: export.steps.len(),
        substeps: export.steps.iter().map(|s| s.substeps.len()).sum(),
        handovers: export.handovers(),
        placements: export.placements(),
        attempts,
        wall_time_s,
    };
    BenchRun { result, export }
}

/// Seed of repeat `r` under a suite seed.
pub fn repeat_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add(r as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub task: String,
    pub goals: Vec<u32>,
    pub mode: Mode,
    /// Worst outcome over the repeats.
    pub outcome: Outcome,
    pub successes: usize,
    pub runs: Vec<RunResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub scenario: String,
    pub seed: u64,
    pub repeats: usize,
    pub modes: Vec<Mode>,
    pub rows: Vec<SuiteRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub task: String,
    pub mode: Mode,
    pub mean_s: f64,
    pub max_s: f64,
}

/// Runs every benchmark in every mode `repeats` times, in parallel.
pub fn run_suite(scenario: &Scenario, modes: &[Mode], seed: u64, repeats: usize, budget_s: f64) -> SuiteReport {
    let jobs: Vec<(usize, Mode, usize)> = (0..scenario.benchmarks.len())
        .flat_map(|b| modes.iter().flat_map(move |m| (0..repeats).map(move |r| (b, *m, r))))
        .collect();
    let results: Vec<RunResult> = jobs
        .par_iter()
        .map(|(b, m, r)| run_benchmark(scenario, &scenario.benchmarks[*b], *m, repeat_seed(seed, *r), budget_s).result)
        .collect();
    let mut rows = Vec::new();
    for (chunk, (b, m, _)) in results.chunks(repeats.max(1)).zip(jobs.iter().step_by(repeats.max(1))) {
        if repeats == 0 {
            break;
        }
        let bench = &scenario.benchmarks[*b];
        rows.push(SuiteRow {
            task: bench.id.clone(),
            goals: bench.goals.clone(),
            mode: *m,
            outcome: chunk.iter().map(|r| r.outcome).max().unwrap_or(Outcome::Failure),
            successes: chunk.iter().filter(|r| r.outcome != Outcome::Failure).count(),
            runs: chunk.to_vec(),
        });
    }
    SuiteReport {
        scenario: scenario.file.name.clone(),
        seed,
        repeats,
        modes: modes.to_vec(),
        rows,
    }
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    fn row(&self, task: &str, mode: Mode) -> Option<&SuiteRow> {
        self.rows.iter().find(|r| r.task == task && r.mode == mode)
    }

    fn tasks(&self) -> Vec<(&str, &[u32])> {
        let mut out: Vec<(&str, &[u32])> = Vec::new();
        for r in &self.rows {
            if !out.iter().any(|(t, _)| *t == r.task) {
                out.push((&r.task, &r.goals));
            }
        }
        out
    }

    /// Text table: one line per task, one column per mode. Each cell shows
    /// the mark, the planned runs out of the repeats and the mean event count.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "scenario {}  seed {}  repeats {}\n○ success  Δ success with cable collisions  × failure\n\n",
            self.scenario, self.seed, self.repeats
        );
        let mut header = format!("{:<6} {:<10}", "task", "goals");
        for m in &self.modes {
            header.push_str(&format!(" {:<22}", m.as_str().to_uppercase()));
        }
        out.push_str(header.trim_end());
        out.push('\n');
        for (task, goals) in self.tasks() {
            let goals = goals.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
            let mut line = format!("{task:<6} {goals:<10}");
            for m in &self.modes {
                let cell = match self.row(task, *m) {
                    Some(r) => {
                        let n = r.runs.len().max(1) as f64;
                        let events = r.runs.iter().map(|x| x.collisions).sum::<usize>() as f64 / n;
                        format!("{} {}/{} events {:.1}", r.outcome.mark(), r.successes, r.runs.len(), events)
                    }
                    None => "-".to_string(),
                };
                line.push_str(&format!(" {cell:<22}"));
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

/// Wall times kept apart from the report so the report stays reproducible.
pub fn timings(report: &SuiteReport) -> Vec<TimingRow> {
    report
        .rows
        .iter()
        .map(|r| {
            let times: Vec<f64> = r.runs.iter().map(|x| x.wall_time_s).collect();
            TimingRow {
                task: r.task.clone(),
                mode: r.mode,
                mean_s: times.iter().sum::<f64>() / times.len().max(1) as f64,
                max_s: times.iter().cloned().fold(0.0, f64::max),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_parses_and_prints() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("cms".parse::<Mode>().is_err());
    }

    #[test]
    fn outcome_marks_and_codes() {
        assert_eq!(Outcome::Success.exit_code(), 0);
        assert_eq!(Outcome::SuccessWithCableCollisions.exit_code(), 2);
        assert_eq!(Outcome::Failure.exit_code(), 1);
        assert_eq!(Outcome::SuccessWithCableCollisions.mark(), 'Δ');
        assert!(Outcome::Failure > Outcome::SuccessWithCableCollisions);
    }

    #[test]
    fn repeat_seeds_are_distinct() {
        assert_eq!(repeat_seed(7, 0), 7);
        assert_ne!(repeat_seed(7, 1), repeat_seed(7, 2));
    }
}
