//! Replicated benchmark sweeps over harvester shapes and fruit densities.
//!
//! A sweep plans every (rows, cells) × density × replication point of its
//! specification and records one metrics row per replication plus one
//! aggregate per point. Replication seeds derive from the master seed and
//! the point coordinates, results keep specification order regardless of
//! how the points execute, and wall-clock columns stay zero unless timing
//! is requested — so a sweep's output is a pure function of its spec.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::time::Instant;

use harvest_core::trajectory::generate_trajectories;
use harvest_core::{
    derive_replication_seed, fruits_per_second, generate_candidates, generate_uniform,
    plan_velocity_and_schedule, HarvesterConfig, ScenarioSpec,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Declarative sweep description, loaded from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    /// (rows, cells) machine shapes to bench.
    pub pairs: Vec<(u32, u32)>,
    /// Fruit densities in fruits/m²; every pair runs at every density.
    pub densities: Vec<f64>,
    /// Replications per (pair, density) point.
    pub replications: u32,
    /// Base scenario. Geometry carries over as-is; `density` is replaced
    /// per point and `seed` acts as the master seed each replication's
    /// own seed is derived from.
    pub scenario: ScenarioSpec,
    /// Optional key-value machine config. `rows`/`cells` and the initial
    /// arm states are re-derived per pair; every other field carries over.
    #[serde(default)]
    pub config: Option<PathBuf>,
}

impl SweepSpec {
    /// Reject empty or degenerate grids before any work starts.
    pub fn validate(&self) -> Result<(), String> {
        if self.pairs.is_empty() {
            return Err("sweep has no (rows, cells) pairs".into());
        }
        if self.densities.is_empty() {
            return Err("sweep has no densities".into());
        }
        if self.replications == 0 {
            return Err("replications must be at least 1".into());
        }
        if let Some(&(r, c)) = self.pairs.iter().find(|&&(r, c)| r == 0 || c == 0) {
            return Err(format!("invalid pair ({r}, {c}): rows and cells must be at least 1"));
        }
        Ok(())
    }
}

/// Execution switches that do not belong in the declarative spec.
#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    /// Also solve trajectories per replication. Off by default: FPT needs
    /// only the schedule makespan, and the LP does not change it.
    pub solve_trajectories: bool,
    /// Fill `plan_ms`/`lp_ms` with wall-clock measurements. Off by
    /// default so equal seeds give byte-identical metrics files.
    pub record_timing: bool,
}

/// One replication's measurements: one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    #[serde(rename = "R")]
    pub rows: u32,
    #[serde(rename = "C")]
    pub cells: u32,
    pub arms: u32,
    pub density: f64,
    /// Replication's own derived seed; regenerates this row in isolation.
    pub seed: u64,
    #[serde(rename = "N")]
    pub count: usize,
    /// Vehicle speed in m/s; empty when the replication failed.
    pub v: Option<f64>,
    /// Schedule makespan in seconds; empty when the replication failed.
    pub makespan: Option<f64>,
    /// Fruits per second, count/makespan; empty when the replication failed.
    pub fpt: Option<f64>,
    pub plan_ms: u64,
    pub lp_ms: u64,
    /// Winning candidate strategy; empty when the replication failed.
    pub strategy: String,
}

/// Aggregate FPT statistics for one (pair, density) point.
#[derive(Debug, Clone, Serialize)]
pub struct PointSummary {
    pub rows: u32,
    pub cells: u32,
    pub arms: u32,
    pub density: f64,
    pub replications: u32,
    pub failed: u32,
    /// Mean FPT over succeeded replications; absent when all failed.
    pub mean_fpt: Option<f64>,
    /// Sample standard deviation; absent with fewer than two successes.
    pub stddev_fpt: Option<f64>,
}

/// One failed replication, kept alongside its empty metrics row.
#[derive(Debug, Clone, Serialize)]
pub struct SweepFailure {
    pub rows: u32,
    pub cells: u32,
    pub density: f64,
    pub rep: u32,
    pub seed: u64,
    pub error: String,
}

/// Aggregates and failure notes, written as the summary JSON.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub points: Vec<PointSummary>,
    pub failures: Vec<SweepFailure>,
}

/// Everything a finished sweep produced.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub records: Vec<MetricsRecord>,
    pub summary: SweepSummary,
}

/// Shape `base` (or the built-in defaults) to one sweep pair: rows and
/// cells replaced, arm states re-derived for the new shape.
pub fn config_for_pair(base: Option<&HarvesterConfig>, rows: u32, cells: u32) -> HarvesterConfig {
    let Some(base) = base else { return HarvesterConfig::new(rows, cells) };
    let mut cfg = base.clone();
    cfg.rows = rows;
    cfg.cells = cells;
    cfg.initial_arm_states = cfg.default_arm_states();
    cfg
}

/// Plan every point of `spec`. Failures are recorded per row (empty
/// metric fields plus a summary note) and never abort the sweep.
pub fn run_sweep(
    spec: &SweepSpec,
    base: Option<&HarvesterConfig>,
    opts: &SweepOptions,
) -> SweepOutcome {
    let mut jobs = Vec::new();
    for &(rows, cells) in &spec.pairs {
        for &density in &spec.densities {
            for rep in 0..spec.replications {
                jobs.push((rows, cells, density, rep));
            }
        }
    }
    let results: Vec<(MetricsRecord, Option<String>)> = jobs
        .par_iter()
        .map(|&(rows, cells, density, rep)| run_point(spec, base, opts, rows, cells, density, rep))
        .collect();

    let reps = spec.replications as usize;
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (slot, chunk) in results.chunks(reps).enumerate() {
        let (rows, cells, density, _) = jobs[slot * reps];
        let fpts: Vec<f64> = chunk.iter().filter_map(|(rec, _)| rec.fpt).collect();
        for (rep, (rec, err)) in chunk.iter().enumerate() {
            if let Some(error) = err {
                failures.push(SweepFailure {
                    rows,
                    cells,
                    density,
                    rep: rep as u32,
                    seed: rec.seed,
                    error: error.clone(),
                });
            }
        }
        points.push(PointSummary {
            rows,
            cells,
            arms: rows * cells,
            density,
            replications: spec.replications,
            failed: (chunk.len() - fpts.len()) as u32,
            mean_fpt: mean(&fpts),
            stddev_fpt: stddev(&fpts),
        });
    }
    let records = results.into_iter().map(|(rec, _)| rec).collect();
    SweepOutcome { records, summary: SweepSummary { points, failures } }
}

/// Generate, plan, and measure one replication.
fn run_point(
    spec: &SweepSpec,
    base: Option<&HarvesterConfig>,
    opts: &SweepOptions,
    rows: u32,
    cells: u32,
    density: f64,
    rep: u32,
) -> (MetricsRecord, Option<String>) {
    let seed = derive_replication_seed(spec.scenario.seed, rows, cells, density, rep);
    let scenario = ScenarioSpec { density, seed, ..spec.scenario };
    let cfg = config_for_pair(base, rows, cells);
    let mut record = MetricsRecord {
        rows,
        cells,
        arms: rows * cells,
        density,
        seed,
        count: scenario.count(),
        v: None,
        makespan: None,
        fpt: None,
        plan_ms: 0,
        lp_ms: 0,
        strategy: String::new(),
    };
    let map = match generate_uniform(&scenario, &cfg) {
        Ok(map) => map,
        Err(e) => return (record, Some(e.to_string())),
    };
    let planning = Instant::now();
    let candidates = generate_candidates(&map, &cfg);
    let plan = match plan_velocity_and_schedule(&candidates, &map, &cfg) {
        Ok(plan) => plan,
        Err(e) => return (record, Some(e.to_string())),
    };
    if opts.record_timing {
        record.plan_ms = planning.elapsed().as_millis() as u64;
    }
    if opts.solve_trajectories {
        let solving = Instant::now();
        if let Err(e) = generate_trajectories(&plan, &map, &cfg) {
            return (record, Some(e.to_string()));
        }
        if opts.record_timing {
            record.lp_ms = solving.elapsed().as_millis() as u64;
        }
    }
    record.v = Some(plan.vehicle_speed);
    record.makespan = Some(plan.makespan);
    record.fpt = Some(fruits_per_second(plan.pick_count(), plan.makespan));
    record.strategy = plan.strategy.as_str().to_string();
    (record, None)
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn stddev(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    (xs.len() >= 2).then(|| {
        (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
    })
}

/// Write records under the fixed
/// `R,C,arms,density,seed,N,v,makespan,fpt,plan_ms,lp_ms,strategy` header.
pub fn write_metrics_csv<W: Write>(out: W, records: &[MetricsRecord]) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    for record in records {
        writer.serialize(record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Parse failure in a metrics file, naming the offending CSV line.
#[derive(Debug, thiserror::Error)]
#[error("metrics parse error (line {line}): {message}")]
pub struct MetricsReadError {
    pub line: u64,
    pub message: String,
}

/// Read a metrics CSV back; failed-replication rows come back with empty
/// optional fields, exactly as written.
pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricsRecord>, MetricsReadError> {
    let mut reader = csv::Reader::from_reader(input);
    let mut records = Vec::new();
    for row in reader.deserialize() {
        let record: MetricsRecord = row.map_err(|e| MetricsReadError {
            line: e.position().map_or(0, csv::Position::line),
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> SweepSpec {
        SweepSpec {
            pairs: vec![(1, 1), (2, 1)],
            densities: vec![5.0],
            replications: 3,
            scenario: ScenarioSpec { density: 0.0, seed: 99, ..ScenarioSpec::default() },
            config: None,
        }
    }

    #[test]
    fn sweep_emits_one_row_per_replication_and_one_point_per_pair() {
        let outcome = run_sweep(&tiny_spec(), None, &SweepOptions::default());
        assert_eq!(outcome.records.len(), 6);
        assert_eq!(outcome.summary.points.len(), 2);
        assert!(outcome.summary.failures.is_empty());
        for record in &outcome.records {
            assert_eq!(record.count, 100);
            let (fpt, makespan) = (record.fpt.unwrap(), record.makespan.unwrap());
            assert!((fpt * makespan - record.count as f64).abs() <= 1e-9 * record.count as f64);
            assert_eq!(record.plan_ms, 0, "timing stays zero unless requested");
        }
        // Replications differ (different seeds) but aggregate cleanly.
        let point = &outcome.summary.points[0];
        assert_eq!(point.replications, 3);
        assert!(point.mean_fpt.is_some() && point.stddev_fpt.is_some());
    }

    #[test]
    fn equal_seeds_give_byte_identical_metrics() {
        let spec = tiny_spec();
        let mut first = Vec::new();
        let mut second = Vec::new();
        write_metrics_csv(&mut first, &run_sweep(&spec, None, &SweepOptions::default()).records)
            .unwrap();
        write_metrics_csv(&mut second, &run_sweep(&spec, None, &SweepOptions::default()).records)
            .unwrap();
        assert!(!first.is_empty() && first == second);
    }

    #[test]
    fn metrics_round_trip_through_csv() {
        let outcome = run_sweep(&tiny_spec(), None, &SweepOptions::default());
        let mut bytes = Vec::new();
        write_metrics_csv(&mut bytes, &outcome.records).unwrap();
        let header = String::from_utf8_lossy(&bytes);
        assert!(header.starts_with("R,C,arms,density,seed,N,v,makespan,fpt,plan_ms,lp_ms,strategy\n"));
        let back = read_metrics_csv(bytes.as_slice()).unwrap();
        assert_eq!(back, outcome.records);
    }

    #[test]
    fn failed_replications_keep_their_rows_and_are_noted() {
        // A machine far ahead of every fruit: the whole row is already
        // behind the rear edge, so no speed is feasible.
        let mut base = HarvesterConfig::new(1, 1);
        base.x_front_init = 100.0;
        let spec = SweepSpec { pairs: vec![(1, 1)], replications: 2, ..tiny_spec() };
        let outcome = run_sweep(&spec, Some(&base), &SweepOptions::default());
        assert_eq!(outcome.records.len(), 2);
        assert_eq!(outcome.summary.failures.len(), 2);
        assert_eq!(outcome.summary.points[0].failed, 2);
        assert_eq!(outcome.summary.points[0].mean_fpt, None);
        for record in &outcome.records {
            assert_eq!(record.v, None);
            assert_eq!(record.fpt, None);
            assert!(record.strategy.is_empty());
        }
    }

    #[test]
    fn config_for_pair_reshapes_the_base() {
        let mut base = HarvesterConfig::new(1, 1);
        base.td_grasp = 3.5;
        let cfg = config_for_pair(Some(&base), 3, 2);
        assert_eq!((cfg.rows, cfg.cells), (3, 2));
        assert_eq!(cfg.td_grasp, 3.5);
        assert_eq!(cfg.initial_arm_states.len(), 6);
        assert!(cfg.validate().is_empty());
    }

    #[test]
    fn spec_validation_names_the_problem() {
        let mut spec = tiny_spec();
        spec.replications = 0;
        assert!(spec.validate().unwrap_err().contains("replications"));
        spec = tiny_spec();
        spec.pairs = vec![(1, 0)];
        assert!(spec.validate().unwrap_err().contains("(1, 0)"));
        spec = tiny_spec();
        spec.densities.clear();
        assert!(spec.validate().unwrap_err().contains("densities"));
    }
}
