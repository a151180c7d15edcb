//! Argument surface and subcommand bodies for the `harvest` binary.
//!
//! Every failure is classified into an [`ExitClass`] so scripts can branch
//! on the process exit code: 1 for I/O and internal failures, 2 for bad
//! invocations, 3 for unparseable inputs, 4 for instances with no feasible
//! plan or trajectory, 5 for plans that failed their own audit.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use harvest_core::scenario::ScenarioError;
use harvest_core::trajectory::{generate_trajectories, write_trajectory_csv, TrajectoryError};
use harvest_core::validate::ValidateError;
use harvest_core::{
    check_trajectories, fruits_per_second, generate_candidates, generate_uniform,
    plan_velocity_and_schedule, replay_schedule, FruitMap, HarvesterConfig, ModelError,
    ReplayReport, ScenarioMeta, ScenarioSpec, ScheduleError, ValidationReport,
};
use serde::Serialize;

use crate::plot::render_fpt_svg;
use crate::sweep::{read_metrics_csv, run_sweep, write_metrics_csv, SweepOptions, SweepSpec};

/// Replay must agree with the planner to machine precision: both routes
/// compute the same reals, so anything beyond accumulated rounding is a
/// divergence.
const REPLAY_TOL: f64 = 1e-9;
/// Trajectories are solved in floating point and audited constraint by
/// constraint; residuals up to solver tolerance are expected.
const TRAJECTORY_TOL: f64 = 1e-6;

/// Process exit code family for a failed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ExitClass {
    /// I/O errors and internal failures.
    Failure = 1,
    /// Invalid invocation: bad flag values, invalid configuration.
    Usage = 2,
    /// Input files that would not parse.
    Parse = 3,
    /// Valid instance with no feasible plan or trajectory.
    Infeasible = 4,
    /// A produced plan failed its own audit.
    Validation = 5,
}

/// A classified failure, printed to stderr as-is.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub class: ExitClass,
    pub message: String,
}

impl CliError {
    fn new(class: ExitClass, message: impl ToString) -> Self {
        CliError { class, message: message.to_string() }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let class = match &e {
            ModelError::Io(_) => ExitClass::Failure,
            ModelError::UnknownFormat { .. } => ExitClass::Usage,
            _ => ExitClass::Parse,
        };
        CliError::new(class, e)
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Model(m) => m.into(),
            other => {
                let class = match &other {
                    ScenarioError::InvalidField { .. } => ExitClass::Usage,
                    ScenarioError::Json(_) => ExitClass::Parse,
                    _ => ExitClass::Failure,
                };
                CliError::new(class, other)
            }
        }
    }
}

impl From<ScheduleError> for CliError {
    fn from(e: ScheduleError) -> Self {
        let class = match &e {
            ScheduleError::InvalidConfig(_) => ExitClass::Usage,
            _ => ExitClass::Infeasible,
        };
        CliError::new(class, e)
    }
}

impl From<TrajectoryError> for CliError {
    fn from(e: TrajectoryError) -> Self {
        CliError::new(ExitClass::Infeasible, e)
    }
}

impl From<ValidateError> for CliError {
    fn from(e: ValidateError) -> Self {
        CliError::new(ExitClass::Validation, e)
    }
}

/// Prefix an error message with the file it came from.
fn at_path(path: &Path, mut err: CliError) -> CliError {
    err.message = format!("{}: {}", path.display(), err.message);
    err
}

/// Map an I/O error on `path` to a plain failure naming the file.
fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::new(ExitClass::Failure, format!("{}: {e}", path.display()))
}

/// Benchmark harness for multi-arm Cartesian fruit harvesters.
#[derive(Debug, Parser)]
#[command(name = "harvest", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a seeded uniform fruit map and write it with a metadata sidecar.
    Generate(GenerateArgs),
    /// Plan one map end to end: speed, schedule, trajectories, audits.
    Plan(PlanArgs),
    /// Run a replicated benchmark sweep described by a JSON spec.
    Sweep(SweepArgs),
    /// Render throughput-versus-arms curves from a sweep's metrics CSV.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Row length in metres.
    #[arg(long, default_value_t = 10.0)]
    pub length: f64,
    /// Canopy height in metres.
    #[arg(long, default_value_t = 2.0)]
    pub height: f64,
    /// Canopy depth in metres.
    #[arg(long, default_value_t = 1.2)]
    pub depth: f64,
    /// Fruits per square metre of row wall.
    #[arg(long, default_value_t = 10.0)]
    pub density: f64,
    /// Generator seed; equal seeds reproduce the map byte for byte.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output map path (.csv or .json); a .meta.json sidecar goes next to it.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Fruit map to harvest (.csv or .json).
    #[arg(long)]
    pub map: PathBuf,
    /// Key-value machine configuration file; defaults apply when omitted.
    #[arg(long, conflicts_with_all = ["rows", "cells"])]
    pub config: Option<PathBuf>,
    /// Arm rows per cell when no config file is given.
    #[arg(long, default_value_t = 1)]
    pub rows: u32,
    /// Workspace cells along the row when no config file is given.
    #[arg(long, default_value_t = 1)]
    pub cells: u32,
    /// Skip the trajectory solve; plan, replay, and report only.
    #[arg(long)]
    pub no_traj: bool,
    /// Plan output path (JSON).
    #[arg(long, default_value = "plan.json")]
    pub plan: PathBuf,
    /// Trajectory output path (CSV).
    #[arg(long, default_value = "trajectory.csv")]
    pub traj: PathBuf,
    /// Audit report output path (JSON).
    #[arg(long, default_value = "validation.json")]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep specification (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Metrics CSV output path, one row per replication.
    #[arg(short, long, default_value = "metrics.csv")]
    pub out: PathBuf,
    /// Summary JSON output path, one aggregate per sweep point.
    #[arg(long, default_value = "summary.json")]
    pub summary: PathBuf,
    /// Also solve trajectories per replication (much slower; throughput
    /// metrics do not need it).
    #[arg(long)]
    pub with_trajectories: bool,
    /// Record wall-clock planning and solve times. Off by default so
    /// reruns of the same spec produce byte-identical metrics.
    #[arg(long)]
    pub record_timing: bool,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Metrics CSV produced by `harvest sweep`.
    #[arg(long)]
    pub metrics: PathBuf,
    /// SVG output path.
    #[arg(short, long, default_value = "fpt.svg")]
    pub out: PathBuf,
}

/// Audit results written next to a plan; the trajectory section is absent
/// when the solve was skipped.
#[derive(Serialize)]
struct PlanReport<'a> {
    replay: &'a ReplayReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    trajectories: Option<&'a ValidationReport>,
}

/// Dispatch a parsed invocation.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Plan(args) => cmd_plan(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Plot(args) => cmd_plot(args),
    }
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let spec = ScenarioSpec {
        row_length: args.length,
        height: args.height,
        depth: args.depth,
        density: args.density,
        seed: args.seed,
    };
    // Maps validate against a frame, so give the generator one at least as
    // tall as the canopy being drawn.
    let mut cfg = HarvesterConfig::new(1, 1);
    cfg.frame_height = cfg.frame_height.max(args.height);
    let map = generate_uniform(&spec, &cfg)?;
    map.save_path(&args.out).map_err(|e| at_path(&args.out, e.into()))?;
    let meta_path = ScenarioMeta::path_for(&args.out);
    ScenarioMeta::for_spec(&spec).save(&meta_path).map_err(|e| at_path(&meta_path, e.into()))?;
    println!("wrote {} fruits to {} (+ {})", map.len(), args.out.display(), meta_path.display());
    Ok(())
}

fn cmd_plan(args: &PlanArgs) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(path) => {
            HarvesterConfig::load_key_values(path).map_err(|e| at_path(path, e.into()))?
        }
        None => HarvesterConfig::new(args.rows, args.cells),
    };
    let violations = cfg.validate();
    if !violations.is_empty() {
        let list = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        return Err(CliError::new(ExitClass::Usage, format!("invalid configuration: {list}")));
    }

    let map = FruitMap::load_path(&args.map, &cfg).map_err(|e| at_path(&args.map, e.into()))?;
    let candidates = generate_candidates(&map, &cfg);
    let plan = plan_velocity_and_schedule(&candidates, &map, &cfg)?;
    write_json(&args.plan, &plan)?;

    let sets = if args.no_traj {
        None
    } else {
        let sets = generate_trajectories(&plan, &map, &cfg)?;
        let file = BufWriter::new(File::create(&args.traj).map_err(io_at(&args.traj))?);
        write_trajectory_csv(file, &sets)
            .map_err(|e| at_path(&args.traj, CliError::new(ExitClass::Failure, e)))?;
        Some(sets)
    };

    // Two independent audits: an event replay of the schedule, and a
    // constraint-by-constraint check of the solved trajectories.
    let replay = replay_schedule(&plan, &map, &cfg, REPLAY_TOL)?;
    let audit = match &sets {
        Some(sets) => Some(check_trajectories(sets, &plan, &map, &cfg, TRAJECTORY_TOL)?),
        None => None,
    };
    write_json(&args.report, &PlanReport { replay: &replay, trajectories: audit.as_ref() })?;

    let mut problems = Vec::new();
    if !replay.divergences.is_empty() || replay.makespan_divergence > REPLAY_TOL {
        problems.push(format!(
            "replay diverges from the plan (max {:.3e} s over {} picks)",
            replay.max_divergence.max(replay.makespan_divergence),
            replay.entries
        ));
    }
    if let Some(audit) = &audit {
        if !audit.is_clean() {
            problems.push(format!(
                "{} trajectory constraint violations (max residual {:.3e})",
                audit.violations.len(),
                audit.max_residual()
            ));
        }
    }
    if !problems.is_empty() {
        return Err(CliError::new(ExitClass::Validation, problems.join("; ")));
    }

    println!(
        "planned {} picks: v = {:.6} m/s, makespan = {:.3} s, {:.4} fruits/s ({})",
        plan.pick_count(),
        plan.vehicle_speed,
        plan.makespan,
        fruits_per_second(plan.pick_count(), plan.makespan),
        plan.strategy.as_str()
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.spec).map_err(io_at(&args.spec))?;
    let spec: SweepSpec = serde_json::from_str(&text)
        .map_err(|e| at_path(&args.spec, CliError::new(ExitClass::Parse, e)))?;
    spec.validate().map_err(|m| CliError::new(ExitClass::Usage, m))?;
    let base = match &spec.config {
        Some(path) => {
            Some(HarvesterConfig::load_key_values(path).map_err(|e| at_path(path, e.into()))?)
        }
        None => None,
    };
    let opts = SweepOptions {
        solve_trajectories: args.with_trajectories,
        record_timing: args.record_timing,
    };
    let outcome = run_sweep(&spec, base.as_ref(), &opts);

    let file = BufWriter::new(File::create(&args.out).map_err(io_at(&args.out))?);
    write_metrics_csv(file, &outcome.records)
        .map_err(|e| at_path(&args.out, CliError::new(ExitClass::Failure, e)))?;
    write_json(&args.summary, &outcome.summary)?;

    for point in &outcome.summary.points {
        let label = format!(
            "R={} C={} density={}: ",
            point.rows, point.cells, point.density
        );
        match point.mean_fpt {
            Some(mean) => println!(
                "{label}mean {:.4} fruits/s over {} replications{}",
                mean,
                point.replications - point.failed,
                point
                    .stddev_fpt
                    .map_or_else(String::new, |sd| format!(" (stddev {sd:.4})"))
            ),
            None => println!("{label}all {} replications failed", point.replications),
        }
    }
    // Individual failed replications keep the sweep alive; their rows are
    // in the CSV and the summary names each one.
    if !outcome.summary.failures.is_empty() {
        eprintln!(
            "harvest: {} of {} replications failed; details in {}",
            outcome.summary.failures.len(),
            outcome.records.len(),
            args.summary.display()
        );
    }
    Ok(())
}

fn cmd_plot(args: &PlotArgs) -> Result<(), CliError> {
    let file = BufReader::new(File::open(&args.metrics).map_err(io_at(&args.metrics))?);
    let records = read_metrics_csv(file)
        .map_err(|e| at_path(&args.metrics, CliError::new(ExitClass::Parse, e)))?;
    let figure = render_fpt_svg(&records)
        .map_err(|e| at_path(&args.metrics, CliError::new(ExitClass::Usage, e)))?;
    fs::write(&args.out, &figure.svg).map_err(io_at(&args.out))?;
    println!("wrote {} ({} series, {} points)", args.out.display(), figure.series, figure.points);
    Ok(())
}

/// Pretty-print `value` as JSON at `path`.
fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::new(ExitClass::Failure, e))?;
    fs::write(path, text).map_err(io_at(path))
}
