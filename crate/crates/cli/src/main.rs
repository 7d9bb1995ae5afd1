use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use tetherplan::bench::{run_benchmark, run_suite, timings, Mode, Outcome};
use tetherplan::export::{dense_csv, dense_rows, verify, TrajectoryExport};
use tetherplan::scenario::{default_scenario, load_scenario, Scenario, ScenarioError};
use tetherplan::svg::{render_all, render_step, View};

const EXIT_FAILURE: u8 = 1;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "tetherplan", version, about = "Tethered-tool manipulation planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan one benchmark task and write its trajectory.
    Plan(PlanArgs),
    /// Run every benchmark in the selected modes and print the summary table.
    Bench(BenchArgs),
    /// Render trajectory steps as SVG.
    ExportSvg(SvgArgs),
    /// Write the dense execution sequence of a trajectory.
    ExportTraj(TrajArgs),
    /// Check a scenario file, or replay the cable audit of a trajectory.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario JSON file; the built-in default scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Benchmark id.
    #[arg(long)]
    task: String,
    #[arg(long, default_value = "tms+ams", value_parser = parse_mode)]
    mode: Mode,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "budget-s")]
    budget_s: Option<f64>,
    /// Trajectory JSON output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Planner modes; both when omitted.
    #[arg(long, value_parser = parse_mode)]
    mode: Vec<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "budget-s")]
    budget_s: Option<f64>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Directory for report.txt, report.json and timings.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SvgArgs {
    #[arg(long)]
    trajectory: PathBuf,
    /// Step index, or `all`.
    #[arg(long, default_value = "0")]
    step: String,
    #[arg(long, default_value = "top", value_parser = parse_view)]
    view: View,
    /// Output file for one step, output directory for `all`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrajFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct TrajArgs {
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: TrajFormat,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, conflicts_with = "trajectory", required_unless_present = "trajectory")]
    scenario: Option<PathBuf>,
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

fn parse_view(s: &str) -> Result<View, String> {
    s.parse()
}

/// Errors that end the program with the input/output exit code.
struct IoFailure(anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for IoFailure {
    fn from(e: E) -> Self {
        IoFailure(e.into())
    }
}

type CmdResult = Result<u8, IoFailure>;

fn scenario(arg: &ScenarioArg) -> Result<Scenario, IoFailure> {
    match &arg.scenario {
        None => Ok(default_scenario()),
        Some(path) => {
            let loaded = load_scenario(path).with_context(|| format!("loading scenario {}", path.display()))?;
            Ok(loaded.scenario)
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), IoFailure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn plan(args: PlanArgs) -> CmdResult {
    let sc = scenario(&args.scenario)?;
    let Some(bench) = sc.benchmark(&args.task) else {
        let ids: Vec<&str> = sc.benchmarks.iter().map(|b| b.id.as_str()).collect();
        return Err(anyhow::anyhow!("unknown task {:?}; scenario defines {:?}", args.task, ids).into());
    };
    let seed = args.seed.unwrap_or(sc.params.seed);
    let budget = args.budget_s.unwrap_or(sc.params.budget_s);
    let run = run_benchmark(&sc, bench, args.mode, seed, budget);
    let r = &run.result;
    println!(
        "task {} mode {} outcome {} {:?} collisions {} steps {} handovers {} placements {} time {:.2}s",
        r.task,
        r.mode,
        r.outcome.mark(),
        r.outcome,
        r.collisions,
        r.steps,
        r.handovers,
        r.placements,
        r.wall_time_s
    );
    if let Some(reason) = &r.failure {
        println!("failure: {reason}");
    }
    if let Some(out) = &args.out {
        write(out, &run.export.to_json())?;
    }
    Ok(r.outcome.exit_code() as u8)
}

fn bench(args: BenchArgs) -> CmdResult {
    let sc = scenario(&args.scenario)?;
    let modes = if args.mode.is_empty() { Mode::ALL.to_vec() } else { args.mode.clone() };
    let seed = args.seed.unwrap_or(sc.params.seed);
    let budget = args.budget_s.unwrap_or(sc.params.budget_s);
    let repeats = args.repeats.unwrap_or(sc.params.repeats);
    let report = run_suite(&sc, &modes, seed, repeats, budget);
    let text = report.to_text();
    print!("{text}");
    let times = timings(&report);
    for t in &times {
        eprintln!("{} {}: mean {:.2}s max {:.2}s", t.task, t.mode, t.mean_s, t.max_s);
    }
    if let Some(dir) = &args.out {
        write(&dir.join("report.txt"), &text)?;
        write(&dir.join("report.json"), &report.to_json())?;
        write(
            &dir.join("timings.json"),
            &serde_json::to_string_pretty(&times).context("serializing timings")?,
        )?;
    }
    let failed = report.rows.iter().any(|r| r.outcome == Outcome::Failure);
    Ok(if failed { EXIT_FAILURE } else { 0 })
}

fn load_export(path: &Path) -> Result<TrajectoryExport, IoFailure> {
    Ok(TrajectoryExport::load(path).with_context(|| format!("loading trajectory {}", path.display()))?)
}

fn export_svg(args: SvgArgs) -> CmdResult {
    let export = load_export(&args.trajectory)?;
    let stem = format!("{}_{}", export.task, export.mode.as_str().replace('+', "_"));
    if args.step == "all" {
        let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
        let files = render_all(&export, args.view, &stem)?;
        for (name, svg) in &files {
            write(&dir.join(name), svg)?;
        }
        println!("wrote {} files to {}", files.len(), dir.display());
        return Ok(0);
    }
    let Ok(step) = args.step.parse::<usize>() else {
        eprintln!("error: --step must be a step index or `all`, got {:?}", args.step);
        return Ok(EXIT_FAILURE);
    };
    let svg = match render_step(&export, step, args.view) {
        Ok(s) => s,
        Err(e @ tetherplan::svg::SvgError::StepIndex { .. }) => {
            eprintln!("error: {e}");
            return Ok(EXIT_FAILURE);
        }
        Err(e) => return Err(e.into()),
    };
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("{stem}_{}_{step:04}.svg", args.view.as_str())));
    write(&out, &svg)?;
    println!("wrote {}", out.display());
    Ok(0)
}

fn export_traj(args: TrajArgs) -> CmdResult {
    let export = load_export(&args.trajectory)?;
    let text = match args.format {
        TrajFormat::Csv => dense_csv(&export),
        TrajFormat::Json => serde_json::to_string_pretty(&dense_rows(&export)).context("serializing rows")? + "\n",
    };
    match &args.out {
        Some(out) => write(out, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn validate(args: ValidateArgs) -> CmdResult {
    if let Some(path) = &args.scenario {
        return match load_scenario(path) {
            Ok(loaded) => {
                for w in &loaded.warnings {
                    println!("warning: {w}");
                }
                let sc = loaded.scenario;
                println!(
                    "ok: {} goals, {} benchmarks, {} candidates per step",
                    sc.goals.len(),
                    sc.benchmarks.len(),
                    sc.params.sampling.candidate_count()
                );
                Ok(0)
            }
            Err(e @ ScenarioError::Io { .. }) => Err(e.into()),
            Err(e) => {
                println!("invalid: {e}");
                Ok(EXIT_FAILURE)
            }
        };
    }
    let path = args.trajectory.expect("clap requires one of the inputs");
    let export = load_export(&path)?;
    if verify(&export).context("replaying trajectory")? {
        println!(
            "ok: {} steps, {} cable collision events reproduced",
            export.steps.len(),
            export.collision_count
        );
        Ok(0)
    } else {
        println!("mismatch: replayed cable audit differs from the recorded one");
        Ok(EXIT_FAILURE)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan(a) => plan(a),
        Command::Bench(a) => bench(a),
        Command::ExportSvg(a) => export_svg(a),
        Command::ExportTraj(a) => export_traj(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(IoFailure(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_IO)
        }
    }
}
