//! Independent verification of planner and trajectory output.
//!
//! Everything in this module re-derives its answers from first principles
//! so that agreement with the planning pipeline is evidence rather than
//! tautology. The schedule replay shares only [`trapezoid_time`] with the
//! scheduler and simulates each pick as a chain of events (depart, yield
//! waits, arrive, dwell); the trajectory checker re-rounds dwell windows
//! and re-evaluates every constraint family numerically; the brute-force
//! oracle enumerates everything a tiny instance allows and reports the
//! best makespan the timing rules admit.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::{Fruit, FruitId, FruitMap, HarvesterConfig, PickingDurationMode};
use crate::motion::trapezoid_time;
use crate::schedule::PlanResult;
use crate::sequence::Strategy;
use crate::trajectory::TrajectorySet;

/// Picks per second of makespan; zero picks in zero time counts as zero.
pub fn fruits_per_second(picks: usize, makespan: f64) -> f64 {
    if makespan > 0.0 { picks as f64 / makespan } else { 0.0 }
}

// ---------------------------------------------------------------------------
// Event-driven schedule replay
// ---------------------------------------------------------------------------

/// Where one arm sits between events.
#[derive(Debug, Clone, Copy)]
struct SimState {
    x: f64,
    z: f64,
    /// When the arm is free to start its next move.
    t: f64,
}

/// Hold time at the fruit, re-derived from the configuration switches.
fn hold_duration(fruit: &Fruit, cfg: &HarvesterConfig) -> f64 {
    match cfg.picking_duration_mode {
        PickingDurationMode::DepthAware => {
            2.0 * trapezoid_time(fruit.y, cfg.limits.v_max, cfg.limits.a_max) + cfg.td_grasp
        }
        PickingDurationMode::Constant => cfg.td_grasp,
    }
}

/// Earliest arrival of a vertical passage from `z` to `z_to` starting free
/// at `t`. The mover marches height to height: it flies to the nearest
/// occupied height strictly between it and the target, waits there until
/// the occupant's departure event frees the height, and repeats until no
/// occupant is left in the way.
fn vertical_arrival(
    mover: usize,
    occupants: &[(f64, f64)],
    mut t: f64,
    mut z: f64,
    z_to: f64,
    cfg: &HarvesterConfig,
) -> f64 {
    loop {
        let next_gate = occupants
            .iter()
            .enumerate()
            .filter(|&(who, _)| who != mover)
            .filter(|&(_, &(gz, _))| (z < gz && gz < z_to) || (z_to < gz && gz < z))
            .map(|(_, &gate)| gate)
            .reduce(|a, b| if (a.0 - z).abs() <= (b.0 - z).abs() { a } else { b });
        match next_gate {
            Some((gz, t_free)) => {
                t += trapezoid_time((gz - z).abs(), cfg.limits.v_max, cfg.limits.a_max);
                if t_free > t {
                    t = t_free;
                }
                z = gz;
            }
            None => {
                return t + trapezoid_time((z_to - z).abs(), cfg.limits.v_max, cfg.limits.a_max);
            }
        }
    }
}

/// Earliest arrival of a horizontal move to world `x_to` starting free at
/// `t` from `x`: a flight at the vehicle-boosted peak, slowed to an
/// edge-ride when the arm starts pinned against the advancing front edge,
/// and never before the target crosses into the cell.
fn horizontal_arrival(
    t: f64,
    x: f64,
    x_to: f64,
    cell: u32,
    cfg: &HarvesterConfig,
    v: f64,
) -> f64 {
    let mut when = t + trapezoid_time((x_to - x).abs(), cfg.limits.v_max + v, cfg.limits.a_max);
    if cfg.x_front(cell, v, t) - x < cfg.front_clearance {
        let ride = (x_to - cfg.x_front(cell, v, 0.0)) / v + v / (2.0 * cfg.limits.a_max);
        if ride > when {
            when = ride;
        }
    }
    let entry = (x_to - cfg.x_front(cell, v, 0.0)) / v;
    if entry > 0.0 && entry > when {
        when = entry;
    }
    when
}

/// Replay grace: a pick is flagged only when its fruit clearly crosses the
/// rear edge, so representation noise cannot fail an honest plan.
const REAR_GRACE: f64 = 1e-9;

/// Earliest start at or after `start` for a dwell of `hold` seconds at
/// height `z_to` in row `mover` that never sits height-inverted against a
/// dwell an adjacent arm has already replayed. Each offending dwell
/// forbids an open span of start times: the mover must either finish and
/// fly the vertical leg between the two heights before that dwell begins,
/// or not start until the dwell ends and the same leg has cleared.
fn inversion_clearance(
    start: f64,
    hold: f64,
    z_to: f64,
    mover: usize,
    dwells: &[Vec<(f64, f64, f64)>],
    cfg: &HarvesterConfig,
) -> f64 {
    let mut blocks: Vec<(f64, f64, f64)> = Vec::new();
    for (other, row) in dwells.iter().enumerate() {
        if other.abs_diff(mover) != 1 {
            continue;
        }
        for &(z, arrival, depart) in row {
            let inverted = if other < mover { z > z_to } else { z < z_to };
            if inverted {
                let leg = trapezoid_time((z - z_to).abs(), cfg.limits.v_max, cfg.limits.a_max);
                blocks.push((arrival, depart, leg));
            }
        }
    }
    let mut t = start;
    while let Some(&(_, depart, leg)) =
        blocks.iter().find(|&&(arrival, depart, leg)| {
            t + hold + leg > arrival && t < depart + leg
        })
    {
        t = depart + leg;
    }
    t
}

/// Time one pick given the beat snapshot and the dwells already replayed
/// per row, or report the rear-edge miss.
#[allow(clippy::too_many_arguments)]
fn time_pick(
    mover: usize,
    snapshot: &[(f64, f64)],
    dwells: &[Vec<(f64, f64, f64)>],
    state: SimState,
    fruit: &Fruit,
    cell: u32,
    cfg: &HarvesterConfig,
    v: f64,
) -> Result<(f64, f64), f64> {
    let vt = vertical_arrival(mover, snapshot, state.t, state.z, fruit.z, cfg);
    let ht = horizontal_arrival(state.t, state.x, fruit.x, cell, cfg, v);
    let hold = hold_duration(fruit, cfg);
    let free = if vt > ht { vt } else { ht };
    let arrival = inversion_clearance(free, hold, fruit.z, mover, dwells, cfg);
    let depart = arrival + hold;
    let shortfall = cfg.x_rear(cell, v, depart) - fruit.x;
    if shortfall > REAR_GRACE { Err(shortfall) } else { Ok((arrival, depart)) }
}

/// Problems that stop a replay or comparison outright, as opposed to
/// numeric divergence, which the report carries as data.
#[derive(Debug, thiserror::Error)]
pub enum ValidateError {
    #[error("no regenerated candidate uses strategy {0:?}")]
    MissingStrategy(Strategy),
    #[error("plan references fruit {id} missing from the map")]
    UnknownFruit { id: FruitId },
    #[error("cell {cell} row {row}: replay picks fruit {replayed:?} where the plan has {planned:?} (pick {position})")]
    PickOrderMismatch {
        cell: u32,
        row: u32,
        position: usize,
        planned: Option<FruitId>,
        replayed: Option<FruitId>,
    },
    #[error("cell {cell} row {row}: fruit {fruit_id} exits the rear edge {shortfall:.3e} m before its dwell completes")]
    RearEdgeViolation { cell: u32, row: u32, fruit_id: FruitId, shortfall: f64 },
    #[error("plan shape does not match the configuration: {0}")]
    ShapeMismatch(String),
}

/// One pick whose replayed times differ from the plan beyond tolerance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReplayDivergence {
    pub cell: u32,
    pub row: u32,
    pub fruit_id: FruitId,
    pub planned_arrival: f64,
    pub replayed_arrival: f64,
    pub planned_depart: f64,
    pub replayed_depart: f64,
}

/// Outcome of replaying a plan: how far the independent simulation strays
/// from the planner's times.
#[derive(Debug, Clone, Serialize)]
pub struct ReplayReport {
    /// Picks compared.
    pub entries: usize,
    /// Largest |replayed - planned| over all arrivals and departs.
    pub max_divergence: f64,
    /// Picks beyond tolerance.
    pub divergences: Vec<ReplayDivergence>,
    /// |replayed makespan - planned makespan|.
    pub makespan_divergence: f64,
}

/// Re-simulate `plan` pick by pick and compare every arrival and depart
/// against the planner's numbers. The pick order is reconstructed from the
/// fruit map with the plan's strategy; the timing itself is this module's
/// own, so agreement within `tol` is two implementations concurring.
pub fn replay_schedule(
    plan: &PlanResult,
    map: &FruitMap,
    cfg: &HarvesterConfig,
    tol: f64,
) -> Result<ReplayReport, ValidateError> {
    let candidates = crate::sequence::generate_candidates(map, cfg);
    let sequence = candidates
        .iter()
        .find(|c| c.strategy == plan.strategy)
        .ok_or(ValidateError::MissingStrategy(plan.strategy))?;
    if plan.cells.len() != cfg.cells as usize {
        return Err(ValidateError::ShapeMismatch(format!(
            "{} cell schedules for {} cells",
            plan.cells.len(),
            cfg.cells
        )));
    }

    let mut report = ReplayReport {
        entries: 0,
        max_divergence: 0.0,
        divergences: Vec::new(),
        makespan_divergence: 0.0,
    };
    let mut replayed_makespan: f64 = 0.0;

    for cell in 1..=cfg.cells {
        let rows = sequence.cell_rows(cell, cfg.rows);
        let planned = &plan.cells[cell as usize - 1];
        if planned.cell != cell || planned.rows.len() != rows.len() {
            return Err(ValidateError::ShapeMismatch(format!(
                "cell {cell}: {} planned rows for {} sequence rows",
                planned.rows.len(),
                rows.len()
            )));
        }
        let beats = rows.first().map(|r| r.entries.len()).unwrap_or(0);

        let mut states: Vec<SimState> = (1..=cfg.rows)
            .map(|row| {
                let init = &cfg.initial_arm_states[cfg.arm_index(cell, row)];
                SimState { x: init.x, z: init.z, t: 0.0 }
            })
            .collect();
        let mut cursors = vec![0usize; rows.len()];
        let mut dwells: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); states.len()];

        for k in 0..beats {
            let snapshot: Vec<(f64, f64)> = states.iter().map(|s| (s.z, s.t)).collect();
            for (i, row) in rows.iter().enumerate() {
                let Some(id) = row.entries[k].fruit else { continue };
                let fruit = map.get(id).ok_or(ValidateError::UnknownFruit { id })?;
                let (arrival, depart) = time_pick(
                    i,
                    &snapshot,
                    &dwells,
                    states[i],
                    fruit,
                    cell,
                    cfg,
                    plan.vehicle_speed,
                )
                .map_err(|shortfall| ValidateError::RearEdgeViolation {
                    cell,
                    row: i as u32 + 1,
                    fruit_id: id,
                    shortfall,
                })?;
                states[i] = SimState { x: fruit.x, z: fruit.z, t: depart };
                dwells[i].push((fruit.z, arrival, depart));
                if depart > replayed_makespan {
                    replayed_makespan = depart;
                }

                let planned_pick = planned.rows[i].get(cursors[i]).copied();
                if planned_pick.map(|p| p.fruit_id) != Some(id) {
                    return Err(ValidateError::PickOrderMismatch {
                        cell,
                        row: i as u32 + 1,
                        position: cursors[i],
                        planned: planned_pick.map(|p| p.fruit_id),
                        replayed: Some(id),
                    });
                }
                let planned_pick = planned_pick.expect("checked above");
                cursors[i] += 1;
                report.entries += 1;
                let err = (arrival - planned_pick.arrival)
                    .abs()
                    .max((depart - planned_pick.depart).abs());
                if err > report.max_divergence {
                    report.max_divergence = err;
                }
                if err > tol {
                    report.divergences.push(ReplayDivergence {
                        cell,
                        row: i as u32 + 1,
                        fruit_id: id,
                        planned_arrival: planned_pick.arrival,
                        replayed_arrival: arrival,
                        planned_depart: planned_pick.depart,
                        replayed_depart: depart,
                    });
                }
            }
        }
        for (i, row) in planned.rows.iter().enumerate() {
            if cursors[i] != row.len() {
                return Err(ValidateError::PickOrderMismatch {
                    cell,
                    row: i as u32 + 1,
                    position: cursors[i],
                    planned: row.get(cursors[i]).map(|p| p.fruit_id),
                    replayed: None,
                });
            }
        }
    }
    report.makespan_divergence = (replayed_makespan - plan.makespan).abs();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Trajectory constraint checking
// ---------------------------------------------------------------------------

/// The constraint families a discrete trajectory must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintFamily {
    /// Positions and velocities at t = 0 match the configured arm states.
    InitialState,
    /// `p[i+1] = p[i] + dt v[i] + dt²/2 a[i]` in both channels.
    PositionDynamics,
    /// `v[i+1] = v[i] + dt a[i]` in both channels.
    VelocityDynamics,
    /// `vx` within `vehicle speed ± v_max`.
    HorizontalVelocity,
    /// `vz` within `± v_max`.
    VerticalVelocity,
    /// `|a| ≤ a_max` in both channels.
    Acceleration,
    /// Each arm stays at or below the arm above it.
    RowOrdering,
    /// `px` inside the advancing cell window.
    FrameWindow,
    /// Bottom arm at or above the frame floor.
    Floor,
    /// Top arm at or below the frame ceiling.
    Ceiling,
    /// Pinned steps hold the fruit position.
    DwellPin,
}

impl ConstraintFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintFamily::InitialState => "initial-state",
            ConstraintFamily::PositionDynamics => "position-dynamics",
            ConstraintFamily::VelocityDynamics => "velocity-dynamics",
            ConstraintFamily::HorizontalVelocity => "horizontal-velocity",
            ConstraintFamily::VerticalVelocity => "vertical-velocity",
            ConstraintFamily::Acceleration => "acceleration",
            ConstraintFamily::RowOrdering => "row-ordering",
            ConstraintFamily::FrameWindow => "frame-window",
            ConstraintFamily::Floor => "floor",
            ConstraintFamily::Ceiling => "ceiling",
            ConstraintFamily::DwellPin => "dwell-pin",
        }
    }

    const ALL: [ConstraintFamily; 11] = [
        ConstraintFamily::InitialState,
        ConstraintFamily::PositionDynamics,
        ConstraintFamily::VelocityDynamics,
        ConstraintFamily::HorizontalVelocity,
        ConstraintFamily::VerticalVelocity,
        ConstraintFamily::Acceleration,
        ConstraintFamily::RowOrdering,
        ConstraintFamily::FrameWindow,
        ConstraintFamily::Floor,
        ConstraintFamily::Ceiling,
        ConstraintFamily::DwellPin,
    ];
}

impl std::fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One constraint breached beyond tolerance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Violation {
    pub family: ConstraintFamily,
    pub cell: u32,
    /// 1-based row; 0 when the violation is not tied to a single arm.
    pub row: u32,
    pub ts: usize,
    pub magnitude: f64,
}

/// Numeric audit of a set of trajectories against one plan.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Worst residual seen per family, violation or not (0 = satisfied
    /// with margin everywhere).
    pub family_residuals: BTreeMap<ConstraintFamily, f64>,
    /// Picks per second of plan makespan.
    pub fpt: f64,
    pub makespan: f64,
}

impl ValidationReport {
    /// True when every family held within the configured tolerance.
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    /// Largest residual across all families.
    pub fn max_residual(&self) -> f64 {
        self.family_residuals.values().fold(0.0, |a, &b| a.max(b))
    }
}

struct Auditor {
    tol: f64,
    violations: Vec<Violation>,
    residuals: BTreeMap<ConstraintFamily, f64>,
}

impl Auditor {
    fn new(tol: f64) -> Self {
        Auditor {
            tol,
            violations: Vec::new(),
            residuals: ConstraintFamily::ALL.iter().map(|&f| (f, 0.0)).collect(),
        }
    }

    /// Record how far a constraint is breached (≤ 0 means satisfied).
    fn note(&mut self, family: ConstraintFamily, cell: u32, row: u32, ts: usize, residual: f64) {
        let entry = self.residuals.get_mut(&family).expect("all families preseeded");
        if residual > *entry {
            *entry = residual;
        }
        if residual > self.tol {
            self.violations.push(Violation { family, cell, row, ts, magnitude: residual });
        }
    }
}

/// The dwell pinning rule: arrivals round up to the next step, departs
/// round down, and a window too short to contain a step pins the single
/// step nearest the depart. Re-stated here so the checker audits the
/// trajectory module's rounding instead of inheriting it.
fn dwell_steps(arrival: f64, depart: f64, dt: f64) -> (usize, usize) {
    let first = ((arrival / dt) - 1e-9).ceil().max(0.0) as usize;
    let last = ((depart / dt) + 1e-9).floor().max(0.0) as usize;
    if first > last { (last, last) } else { (first, last) }
}

/// Audit every constraint family of every trajectory set at tolerance
/// `tol`, and compute the plan-level throughput metrics.
pub fn check_trajectories(
    sets: &[TrajectorySet],
    plan: &PlanResult,
    map: &FruitMap,
    cfg: &HarvesterConfig,
    tol: f64,
) -> Result<ValidationReport, ValidateError> {
    let mut audit = Auditor::new(tol);
    for set in sets {
        let cell = set.cell;
        let v = set.vehicle_speed;
        let dt = set.dt;
        let steps = set.arms.first().map(|a| a.px.len().saturating_sub(1)).unwrap_or(0);
        if set.arms.len() != cfg.rows as usize {
            return Err(ValidateError::ShapeMismatch(format!(
                "cell {cell}: {} trajectories for {} rows",
                set.arms.len(),
                cfg.rows
            )));
        }

        for (r, arm) in set.arms.iter().enumerate() {
            let row = r as u32 + 1;
            let init = &cfg.initial_arm_states[cfg.arm_index(cell, row)];
            let (vx0, vz0) = init.velocity_at(v);
            audit.note(ConstraintFamily::InitialState, cell, row, 0, (arm.px[0] - init.x).abs());
            audit.note(ConstraintFamily::InitialState, cell, row, 0, (arm.pz[0] - init.z).abs());
            audit.note(ConstraintFamily::InitialState, cell, row, 0, (arm.vx[0] - vx0).abs());
            audit.note(ConstraintFamily::InitialState, cell, row, 0, (arm.vz[0] - vz0).abs());

            let half = 0.5 * dt * dt;
            for i in 0..steps {
                let px = arm.px[i] + dt * arm.vx[i] + half * arm.ax[i];
                let pz = arm.pz[i] + dt * arm.vz[i] + half * arm.az[i];
                audit.note(ConstraintFamily::PositionDynamics, cell, row, i + 1, (arm.px[i + 1] - px).abs());
                audit.note(ConstraintFamily::PositionDynamics, cell, row, i + 1, (arm.pz[i + 1] - pz).abs());
                let vx = arm.vx[i] + dt * arm.ax[i];
                let vz = arm.vz[i] + dt * arm.az[i];
                audit.note(ConstraintFamily::VelocityDynamics, cell, row, i + 1, (arm.vx[i + 1] - vx).abs());
                audit.note(ConstraintFamily::VelocityDynamics, cell, row, i + 1, (arm.vz[i + 1] - vz).abs());
                audit.note(ConstraintFamily::Acceleration, cell, row, i, arm.ax[i].abs() - cfg.limits.a_max);
                audit.note(ConstraintFamily::Acceleration, cell, row, i, arm.az[i].abs() - cfg.limits.a_max);
            }

            for i in 0..=steps {
                let t = i as f64 * dt;
                audit.note(ConstraintFamily::HorizontalVelocity, cell, row, i, (arm.vx[i] - v).abs() - cfg.limits.v_max);
                audit.note(ConstraintFamily::VerticalVelocity, cell, row, i, arm.vz[i].abs() - cfg.limits.v_max);
                let (rear, front) = cfg.cell_bounds(cell, v, t);
                audit.note(ConstraintFamily::FrameWindow, cell, row, i, rear - arm.px[i]);
                audit.note(ConstraintFamily::FrameWindow, cell, row, i, arm.px[i] - front);
                if r == 0 {
                    audit.note(ConstraintFamily::Floor, cell, row, i, -arm.pz[i]);
                }
                if r + 1 == set.arms.len() {
                    audit.note(ConstraintFamily::Ceiling, cell, row, i, arm.pz[i] - cfg.frame_height);
                }
            }
        }

        for r in 0..set.arms.len().saturating_sub(1) {
            let (below, above) = (&set.arms[r], &set.arms[r + 1]);
            for i in 0..=steps {
                audit.note(ConstraintFamily::RowOrdering, cell, r as u32 + 1, i, below.pz[i] - above.pz[i]);
            }
        }

        for (r, row_schedule) in set.schedule.rows.iter().enumerate() {
            let arm = &set.arms[r];
            for entry in row_schedule {
                let fruit = map
                    .get(entry.fruit_id)
                    .ok_or(ValidateError::UnknownFruit { id: entry.fruit_id })?;
                let (first, last) = dwell_steps(entry.arrival, entry.depart, dt);
                for ts in first..=last.min(steps) {
                    audit.note(ConstraintFamily::DwellPin, cell, r as u32 + 1, ts, (arm.px[ts] - fruit.x).abs());
                    audit.note(ConstraintFamily::DwellPin, cell, r as u32 + 1, ts, (arm.pz[ts] - fruit.z).abs());
                }
            }
        }
    }

    Ok(ValidationReport {
        violations: audit.violations,
        family_residuals: audit.residuals,
        fpt: fruits_per_second(plan.pick_count(), plan.makespan),
        makespan: plan.makespan,
    })
}

// ---------------------------------------------------------------------------
// Brute-force makespan oracle
// ---------------------------------------------------------------------------

/// Smallest makespan any assignment and ordering achieves on a tiny
/// instance at fixed vehicle speed `v`, or `None` when nothing is
/// feasible. Exhausts fruit-to-row assignments, per-row pick orders, and
/// beat placements (idle beats let an arm sit out a round), pruning
/// vertically crossed pairings — a lower arm never serves a beat above a
/// higher arm's — and timing each case with the replay rules.
///
/// The search space is genuinely exhaustive only within this rule set,
/// which is exactly the space the sequence builder draws from; the result
/// is a floor for heuristic quality, not a physical optimum.
///
/// # Panics
/// When the instance is out of scope: more than one cell, more than two
/// rows, or more than six fruits.
pub fn brute_force_makespan(map: &FruitMap, cfg: &HarvesterConfig, v: f64) -> Option<f64> {
    assert_eq!(cfg.cells, 1, "oracle covers single-cell instances only");
    assert!(cfg.rows <= 2, "oracle covers at most two rows");
    assert!(map.len() <= 6, "oracle covers at most six fruits");
    let ids: Vec<FruitId> = map.fruits().iter().map(|f| f.id).collect();
    if ids.is_empty() {
        return Some(0.0);
    }

    let mut best: Option<f64> = None;
    if cfg.rows == 1 {
        // Idle beats cannot change a lone arm's timing, so plain orders
        // suffice.
        permutations(&mut ids.clone(), 0, &mut |order| {
            let beats: Vec<Vec<Option<FruitId>>> = vec![order.iter().map(|&id| Some(id)).collect()];
            if let Some(makespan) = simulate_makespan(&beats, map, cfg, v) {
                best = Some(best.map_or(makespan, |b| b.min(makespan)));
            }
        });
        return best;
    }

    let n = ids.len();
    for mask in 0u32..(1 << n) {
        let low: Vec<FruitId> =
            (0..n).filter(|&i| mask & (1 << i) == 0).map(|i| ids[i]).collect();
        let high: Vec<FruitId> =
            (0..n).filter(|&i| mask & (1 << i) != 0).map(|i| ids[i]).collect();
        permutations(&mut low.clone(), 0, &mut |low_order| {
            permutations(&mut high.clone(), 0, &mut |high_order| {
                for_each_placement(n, low_order.len(), &mut |low_slots| {
                    for_each_placement(n, high_order.len(), &mut |high_slots| {
                        let beats = place(n, low_order, low_slots, high_order, high_slots);
                        if crossed_beat(&beats, map) {
                            return;
                        }
                        if let Some(makespan) = simulate_makespan(&beats, map, cfg, v) {
                            best = Some(best.map_or(makespan, |b| b.min(makespan)));
                        }
                    });
                });
            });
        });
    }
    best
}

/// Visit every permutation of `items[k..]` in place (Heap's algorithm).
fn permutations<T: Copy>(items: &mut Vec<T>, k: usize, visit: &mut impl FnMut(&[T])) {
    if k + 1 >= items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Visit every way to choose `count` of `slots` beat positions, as a
/// bitmask over the low `slots` bits.
fn for_each_placement(slots: usize, count: usize, visit: &mut impl FnMut(u32)) {
    for mask in 0u32..(1 << slots) {
        if mask.count_ones() as usize == count {
            visit(mask);
        }
    }
}

/// Lay two pick orders onto a shared beat grid.
fn place(
    beats: usize,
    low_order: &[FruitId],
    low_slots: u32,
    high_order: &[FruitId],
    high_slots: u32,
) -> Vec<Vec<Option<FruitId>>> {
    vec![lay(beats, low_order, low_slots), lay(beats, high_order, high_slots)]
}

/// Spread `order` over the beats selected by the `slots` bitmask.
fn lay(beats: usize, order: &[FruitId], slots: u32) -> Vec<Option<FruitId>> {
    let mut row = vec![None; beats];
    let mut next = order.iter();
    for (k, slot) in row.iter_mut().enumerate() {
        if slots & (1 << k) != 0 {
            *slot = next.next().copied();
        }
    }
    row
}

/// True when some beat serves the lower arm a fruit above the higher
/// arm's fruit: such pairings cross and are excluded from the space.
fn crossed_beat(beats: &[Vec<Option<FruitId>>], map: &FruitMap) -> bool {
    let (low, high) = (&beats[0], &beats[1]);
    low.iter().zip(high).any(|pair| match pair {
        (Some(a), Some(b)) => {
            map.get(*a).map(|f| f.z) > map.get(*b).map(|f| f.z)
        }
        _ => false,
    })
}

/// Makespan of one beat table under the replay timing rules, or `None`
/// when some pick misses the rear edge.
fn simulate_makespan(
    beats: &[Vec<Option<FruitId>>],
    map: &FruitMap,
    cfg: &HarvesterConfig,
    v: f64,
) -> Option<f64> {
    let cell = 1;
    let mut states: Vec<SimState> = (1..=cfg.rows)
        .map(|row| {
            let init = &cfg.initial_arm_states[cfg.arm_index(cell, row)];
            SimState { x: init.x, z: init.z, t: 0.0 }
        })
        .collect();
    let rounds = beats.first().map(Vec::len).unwrap_or(0);
    let mut dwells: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); states.len()];
    let mut makespan: f64 = 0.0;
    for k in 0..rounds {
        let snapshot: Vec<(f64, f64)> = states.iter().map(|s| (s.z, s.t)).collect();
        for i in 0..beats.len() {
            let Some(id) = beats[i][k] else { continue };
            let fruit = map.get(id).expect("oracle fruits come from the map");
            let (arrival, depart) =
                time_pick(i, &snapshot, &dwells, states[i], fruit, cell, cfg, v).ok()?;
            states[i] = SimState { x: fruit.x, z: fruit.z, t: depart };
            dwells[i].push((fruit.z, arrival, depart));
            if depart > makespan {
                makespan = depart;
            }
        }
    }
    Some(makespan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Fruit;
    use crate::schedule::{plan_velocity_and_schedule, schedule_candidate_at_speed};
    use crate::sequence::generate_candidates;
    use crate::trajectory::generate_trajectories;

    fn plan_for(cfg: &HarvesterConfig, fruits: Vec<Fruit>) -> (PlanResult, FruitMap) {
        let map = FruitMap::from_fruits(fruits, cfg).unwrap();
        let candidates = generate_candidates(&map, cfg);
        let plan = plan_velocity_and_schedule(&candidates, &map, cfg).unwrap();
        (plan, map)
    }

    fn spread_fruits(count: u64, step_x: f64) -> Vec<Fruit> {
        (0..count)
            .map(|i| Fruit {
                id: i,
                x: -0.2 + step_x * i as f64,
                y: 0.1,
                z: 0.3 + 0.17 * (i % 9) as f64,
            })
            .collect()
    }

    #[test]
    fn fpt_is_picks_over_makespan() {
        assert_eq!(fruits_per_second(100, 50.0), 2.0);
        assert_eq!(fruits_per_second(0, 0.0), 0.0);
    }

    #[test]
    fn replay_agrees_with_the_planner() {
        let cfg = HarvesterConfig::new(2, 1);
        let (plan, map) = plan_for(&cfg, spread_fruits(9, 0.3));
        let report = replay_schedule(&plan, &map, &cfg, 1e-9).unwrap();
        assert_eq!(report.entries, plan.pick_count());
        assert!(report.divergences.is_empty(), "{:?}", report.divergences);
        assert!(report.max_divergence <= 1e-9);
        assert!(report.makespan_divergence <= 1e-9);
    }

    #[test]
    fn replay_of_an_empty_plan_is_empty() {
        let cfg = HarvesterConfig::new(1, 1);
        let (plan, map) = plan_for(&cfg, Vec::new());
        let report = replay_schedule(&plan, &map, &cfg, 1e-9).unwrap();
        assert_eq!(report.entries, 0);
        assert_eq!(report.max_divergence, 0.0);
    }

    #[test]
    fn replay_single_pick_matches_hand_arithmetic() {
        let cfg = HarvesterConfig::new(1, 1);
        let init = cfg.initial_arm_states[0];
        // Fruit straight ahead at the arm's height: arrival is purely the
        // horizontal move, well clear of the front edge.
        let fruit = Fruit { id: 0, x: init.x + 0.2, y: 0.0, z: init.z };
        let (plan, map) = plan_for(&cfg, vec![fruit]);
        let v = plan.vehicle_speed;
        let report = replay_schedule(&plan, &map, &cfg, 1e-9).unwrap();
        assert!(report.divergences.is_empty());
        let entry = plan.cells[0].rows[0][0];
        let flight = trapezoid_time(0.2, cfg.limits.v_max + v, cfg.limits.a_max);
        assert!((entry.arrival - flight).abs() < 1e-9);
        assert!((entry.depart - (flight + cfg.td_grasp)).abs() < 1e-9);
    }

    #[test]
    fn replay_rejects_a_reordered_plan() {
        let cfg = HarvesterConfig::new(1, 1);
        let (mut plan, map) = plan_for(&cfg, spread_fruits(4, 0.4));
        let row = &mut plan.cells[0].rows[0];
        row.swap(0, 1);
        match replay_schedule(&plan, &map, &cfg, 1e-9) {
            Err(ValidateError::PickOrderMismatch { cell: 1, row: 1, position: 0, .. }) => {}
            other => panic!("expected a pick-order mismatch, got {other:?}"),
        }
    }

    #[test]
    fn replay_flags_a_shifted_arrival() {
        let cfg = HarvesterConfig::new(1, 1);
        let (mut plan, map) = plan_for(&cfg, spread_fruits(4, 0.4));
        plan.cells[0].rows[0][2].arrival += 0.25;
        let report = replay_schedule(&plan, &map, &cfg, 1e-9).unwrap();
        assert_eq!(report.divergences.len(), 1);
        assert_eq!(report.divergences[0].fruit_id, plan.cells[0].rows[0][2].fruit_id);
        assert!((report.max_divergence - 0.25).abs() < 1e-9);
    }

    #[test]
    fn checker_passes_solver_output() {
        let cfg = HarvesterConfig::new(2, 1);
        let (plan, map) = plan_for(&cfg, spread_fruits(6, 0.35));
        let sets = generate_trajectories(&plan, &map, &cfg).unwrap();
        let report = check_trajectories(&sets, &plan, &map, &cfg, 1e-6).unwrap();
        assert!(report.is_clean(), "{:?}", report.violations);
        assert!(report.max_residual() <= 1e-6);
        let picks = plan.pick_count() as f64;
        assert!((report.fpt * report.makespan - picks).abs() < 1e-9 * picks);
    }

    #[test]
    fn perturbed_dwell_is_flagged_once_as_a_dwell_violation() {
        let cfg = HarvesterConfig::new(1, 1);
        let init = cfg.initial_arm_states[0];
        let fruit = Fruit { id: 0, x: init.x + 0.15, y: 0.2, z: init.z + 0.3 };
        let (plan, map) = plan_for(&cfg, vec![fruit]);
        let mut sets = generate_trajectories(&plan, &map, &cfg).unwrap();
        let entry = sets[0].schedule.rows[0][0];
        let (first, last) = dwell_steps(entry.arrival, entry.depart, cfg.dt);
        let mid = (first + last) / 2;
        assert!(first < mid && mid < last, "want an interior dwell step");
        sets[0].arms[0].pz[mid] += 0.01;
        let report = check_trajectories(&sets, &plan, &map, &cfg, 1e-6).unwrap();
        let dwell: Vec<_> =
            report.violations.iter().filter(|v| v.family == ConstraintFamily::DwellPin).collect();
        assert_eq!(dwell.len(), 1, "{:?}", report.violations);
        assert_eq!(dwell[0].ts, mid);
        assert!((dwell[0].magnitude - 0.01).abs() < 1e-9);
        // The nudged waypoint also breaks the step recurrence around it.
        assert!(report.family_residuals[&ConstraintFamily::PositionDynamics] > 1e-6);
    }

    #[test]
    fn speeding_arm_is_flagged_in_the_right_family() {
        let cfg = HarvesterConfig::new(1, 1);
        let init = cfg.initial_arm_states[0];
        let fruit = Fruit { id: 0, x: init.x + 0.15, y: 0.2, z: init.z + 0.3 };
        let (plan, map) = plan_for(&cfg, vec![fruit]);
        let mut sets = generate_trajectories(&plan, &map, &cfg).unwrap();
        let i = sets[0].arms[0].vx.len() / 2;
        sets[0].arms[0].vx[i] = plan.vehicle_speed + cfg.limits.v_max + 0.5;
        let report = check_trajectories(&sets, &plan, &map, &cfg, 1e-6).unwrap();
        assert!(report
            .violations
            .iter()
            .any(|v| v.family == ConstraintFamily::HorizontalVelocity && v.ts == i));
    }

    #[test]
    fn brute_force_matches_the_only_schedule_for_one_fruit() {
        let cfg = HarvesterConfig::new(1, 1);
        let init = cfg.initial_arm_states[0];
        let fruit = Fruit { id: 0, x: init.x + 0.2, y: 0.1, z: init.z + 0.1 };
        let map = FruitMap::from_fruits(vec![fruit], &cfg).unwrap();
        let v = 0.05;
        let best = brute_force_makespan(&map, &cfg, v).unwrap();
        let candidates = generate_candidates(&map, &cfg);
        let cells = schedule_candidate_at_speed(&candidates[0], &map, &cfg, v).unwrap();
        assert!((best - cells[0].makespan).abs() < 1e-9);
    }

    #[test]
    fn brute_force_assigns_stacked_fruits_without_crossing() {
        let cfg = HarvesterConfig::new(2, 1);
        let fruits = vec![
            Fruit { id: 0, x: -0.3, y: 0.0, z: 0.5 },
            Fruit { id: 1, x: -0.3, y: 0.0, z: 1.5 },
        ];
        let map = FruitMap::from_fruits(fruits, &cfg).unwrap();
        let v = 0.02;
        let best = brute_force_makespan(&map, &cfg, v).unwrap();
        // The natural split picks both in parallel: each arm starts at its
        // fruit's height, so the makespan is one hold time.
        assert!((best - cfg.td_grasp).abs() < 1e-9, "got {best}");
    }

    #[test]
    fn heuristic_never_beats_the_oracle_on_small_instances() {
        let cfg = HarvesterConfig::new(2, 1);
        let cases: Vec<Vec<Fruit>> = vec![
            vec![
                Fruit { id: 0, x: -0.4, y: 0.1, z: 0.4 },
                Fruit { id: 1, x: -0.1, y: 0.3, z: 1.2 },
                Fruit { id: 2, x: 0.3, y: 0.0, z: 0.9 },
                Fruit { id: 3, x: 0.6, y: 0.2, z: 1.6 },
            ],
            vec![
                Fruit { id: 0, x: 0.0, y: 0.0, z: 1.8 },
                Fruit { id: 1, x: 0.05, y: 0.1, z: 0.2 },
                Fruit { id: 2, x: 0.4, y: 0.2, z: 1.0 },
            ],
            vec![
                Fruit { id: 0, x: -0.5, y: 0.4, z: 0.7 },
                Fruit { id: 1, x: -0.45, y: 0.1, z: 0.75 },
                Fruit { id: 2, x: -0.2, y: 0.0, z: 0.7 },
                Fruit { id: 3, x: 0.1, y: 0.3, z: 1.4 },
                Fruit { id: 4, x: 0.2, y: 0.2, z: 0.3 },
            ],
        ];
        for fruits in cases {
            let map = FruitMap::from_fruits(fruits, &cfg).unwrap();
            let candidates = generate_candidates(&map, &cfg);
            // Halve the probe speed until the heuristic schedule fits; the
            // comparison needs any shared feasible speed, not a fast one.
            let mut v = 0.03;
            let heuristic = loop {
                match schedule_candidate_at_speed(&candidates[0], &map, &cfg, v) {
                    Ok(cells) => break cells.iter().map(|c| c.makespan).fold(0.0, f64::max),
                    Err(_) => {
                        v *= 0.5;
                        assert!(v > 1e-6, "no feasible probe speed for a hand instance");
                    }
                }
            };
            let optimal = brute_force_makespan(&map, &cfg, v).expect("oracle finds a schedule");
            assert!(
                heuristic >= optimal - 1e-9,
                "heuristic {heuristic} beat the exhaustive floor {optimal}"
            );
        }
    }
}
