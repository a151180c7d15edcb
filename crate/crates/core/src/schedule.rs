//! Vehicle-speed selection and per-cell pick scheduling.
//!
//! The planner binary-searches the largest constant vehicle speed at which
//! every cell can complete its candidate sequence, then keeps the candidate
//! with the smallest makespan. Per-cell scheduling walks all rows in
//! lockstep zone by zone: a row's move is timed vertically (waiting for
//! arms it must pass) and horizontally (respecting the advancing cell
//! frame), and a pick fails the speed if its fruit would leave the cell's
//! rear edge before the dwell completes.

use serde::Serialize;

use crate::model::{ConfigViolation, FruitId, FruitMap, HarvesterConfig, KinematicLimits};
use crate::motion::{picking_duration, trapezoid_time};
use crate::sequence::{ArmSequence, HarvesterSequence, Strategy};

/// One scheduled pick: the arm holds at the fruit over `[arrival, depart]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleEntry {
    pub fruit_id: FruitId,
    pub arrival: f64,
    pub depart: f64,
}

/// All picks of one cell, rows bottom-up; skips are omitted.
#[derive(Debug, Clone, Serialize)]
pub struct CellSchedule {
    pub cell: u32,
    pub rows: Vec<Vec<ScheduleEntry>>,
    /// Latest depart in the cell; 0 for a cell with nothing to pick.
    #[serde(skip)]
    pub makespan: f64,
}

/// A complete plan: the chosen speed, the winning strategy, and every
/// cell's schedule.
#[derive(Debug, Clone, Serialize)]
pub struct PlanResult {
    pub vehicle_speed: f64,
    pub makespan: f64,
    pub strategy: Strategy,
    pub cells: Vec<CellSchedule>,
}

impl PlanResult {
    /// Total number of scheduled picks.
    pub fn pick_count(&self) -> usize {
        self.cells.iter().map(|c| c.rows.iter().map(Vec::len).sum::<usize>()).sum()
    }
}

/// A blocking arm on a vertical passage: the mover must reach `z` no
/// earlier than `t_free`, when the blocker departs its current fruit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YieldRecord {
    pub z: f64,
    pub t_free: f64,
}

/// Why a given vehicle speed fails: the first pick whose fruit exits the
/// cell's rear edge before its dwell completes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InfeasiblePick {
    pub cell: u32,
    pub row: u32,
    pub fruit_id: FruitId,
    pub speed: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ScheduleError {
    #[error("invalid configuration: {}", format_violations(.0))]
    InvalidConfig(Vec<ConfigViolation>),
    #[error("sequence references fruit {id} missing from the map")]
    UnknownFruit { id: FruitId },
    #[error("fruit {id} has a nonpositive picking duration; no finite speed bound exists")]
    NonpositivePickingDuration { id: FruitId },
    #[error("no feasible plan at any probed speed{}", match .last_failure {
        Some(p) => format!(" (last failure: fruit {} in cell {} row {} at v = {})", p.fruit_id, p.cell, p.row, p.speed),
        None => String::new(),
    })]
    NoFeasiblePlan { last_failure: Option<InfeasiblePick> },
}

fn format_violations(violations: &[ConfigViolation]) -> String {
    violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// Current state of one arm while a cell is being scheduled.
#[derive(Debug, Clone, Copy)]
struct ArmState {
    x: f64,
    z: f64,
    /// Time the arm is free to start its next move (its last depart).
    t: f64,
}

/// Blocking arms for a vertical move from `z_from` to `z_to`: every other
/// arm whose current height lies strictly between the two, ordered along
/// the direction of travel. These are the heights the mover has to pass
/// and the times at which each becomes free to get out of the way.
pub fn yield_records(mover: usize, states: &[(f64, f64)], z_from: f64, z_to: f64) -> Vec<YieldRecord> {
    let mut records: Vec<YieldRecord> = states
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != mover)
        .filter(|&(_, &(z, _))| (z_from < z && z < z_to) || (z_to < z && z < z_from))
        .map(|(_, &(z, t_free))| YieldRecord { z, t_free })
        .collect();
    if z_to >= z_from {
        records.sort_by(|a, b| a.z.total_cmp(&b.z));
    } else {
        records.sort_by(|a, b| b.z.total_cmp(&a.z));
    }
    records
}

/// Earliest time the arm can be at height `z_to`, starting free at `t` and
/// at `z_from`, stopping at each blocking height until its arm has moved
/// clear. Each leg is a rest-to-rest move at the joint limits.
pub fn vertical_time(
    t: f64,
    z_from: f64,
    z_to: f64,
    yields: &[YieldRecord],
    limits: &KinematicLimits,
) -> f64 {
    let mut time = t;
    let mut z = z_from;
    for record in yields {
        time += trapezoid_time((record.z - z).abs(), limits.v_max, limits.a_max);
        if record.t_free > time {
            time = record.t_free;
        }
        z = record.z;
    }
    time + trapezoid_time((z_to - z).abs(), limits.v_max, limits.a_max)
}

/// Earliest time the arm can be at world x `x_to`, starting free at `t`
/// and at `x_cur`, inside moving cell `cell` under vehicle speed `v`.
///
/// With clearance to the cell's front edge the move is a free flight at
/// peak `v_max + v`. Pinned against the advancing edge, the arm instead
/// rides it until the target comes within reach (never beating the free
/// flight). Either way the arm cannot arrive before the fruit crosses
/// into the cell.
pub fn horizontal_time(
    t: f64,
    x_cur: f64,
    x_to: f64,
    cell: u32,
    cfg: &HarvesterConfig,
    v: f64,
) -> f64 {
    let flight = t + trapezoid_time((x_to - x_cur).abs(), cfg.limits.v_max + v, cfg.limits.a_max);
    let d_front = cfg.x_front(cell, v, t) - x_cur;
    let mut arrive = if d_front >= cfg.front_clearance {
        flight
    } else {
        let ride = (x_to - cfg.x_front(cell, v, 0.0)) / v + v / (2.0 * cfg.limits.a_max);
        ride.max(flight)
    };
    let t_enter = (x_to - cfg.x_front(cell, v, 0.0)) / v;
    if t_enter > 0.0 && t_enter > arrive {
        arrive = t_enter;
    }
    arrive
}

/// Earliest dwell start at or after `start` whose window never sits
/// height-inverted against an adjacent arm's already-committed dwell.
/// Zone construction orders the fruits claimed within one index, but rows
/// drift apart in wall time, so a neighbour's lingering dwell can sit
/// squarely where this fruit hangs; the arm then holds on its own side of
/// the neighbour until that dwell clears and travels past it. The same
/// trapezoid leg pads the fits-before case so the neighbour can still
/// make its own arrival after this dwell ends.
fn ordering_floor(
    start: f64,
    tp: f64,
    z_target: f64,
    row: usize,
    committed: &[Vec<ScheduleEntry>],
    map: &FruitMap,
    limits: &KinematicLimits,
) -> f64 {
    let mut arrival = start;
    loop {
        let mut bumped = false;
        for adj in [row.wrapping_sub(1), row + 1] {
            let Some(entries) = committed.get(adj) else { continue };
            for e in entries {
                let z_other =
                    map.get(e.fruit_id).expect("committed entries reference known fruit").z;
                let inverted =
                    if adj < row { z_other > z_target } else { z_other < z_target };
                if !inverted {
                    continue;
                }
                let margin =
                    trapezoid_time((z_other - z_target).abs(), limits.v_max, limits.a_max);
                let clear_before = arrival + tp + margin <= e.arrival;
                let clear_after = arrival >= e.depart + margin;
                if !(clear_before || clear_after) {
                    arrival = e.depart + margin;
                    bumped = true;
                }
            }
        }
        if !bumped {
            break;
        }
    }
    arrival
}

/// Schedule one cell at a fixed vehicle speed. `rows` holds the cell's
/// per-row sequences bottom-up; all must have equal length. Returns the
/// first impossible pick if the speed is too high.
pub fn schedule_cell_at_speed(
    cell: u32,
    rows: &[ArmSequence],
    map: &FruitMap,
    cfg: &HarvesterConfig,
    v: f64,
) -> Result<CellSchedule, InfeasiblePick> {
    let r = rows.len();
    assert!(r as u32 == cfg.rows, "expected {} row sequences, got {r}", cfg.rows);
    let len = rows.first().map(|s| s.entries.len()).unwrap_or(0);
    assert!(
        rows.iter().all(|s| s.entries.len() == len),
        "cell {cell}: row sequences must have equal length"
    );

    let mut states: Vec<ArmState> = (1..=cfg.rows)
        .map(|row| {
            let init = &cfg.initial_arm_states[cfg.arm_index(cell, row)];
            ArmState { x: init.x, z: init.z, t: 0.0 }
        })
        .collect();
    let mut schedule: Vec<Vec<ScheduleEntry>> = vec![Vec::new(); r];
    let mut makespan: f64 = 0.0;

    for k in 0..len {
        // Yield info freezes on the state every arm reached after zone k-1.
        let snapshot: Vec<(f64, f64)> = states.iter().map(|s| (s.z, s.t)).collect();
        let yields: Vec<Option<Vec<YieldRecord>>> = (0..r)
            .map(|i| {
                rows[i].entries[k].fruit.map(|id| {
                    let target = map.get(id).expect("sequence references missing fruit");
                    yield_records(i, &snapshot, states[i].z, target.z)
                })
            })
            .collect();
        for i in 0..r {
            let Some(id) = rows[i].entries[k].fruit else { continue };
            let fruit = map.get(id).expect("sequence references missing fruit");
            let vt = vertical_time(states[i].t, states[i].z, fruit.z, yields[i].as_ref().unwrap(), &cfg.limits);
            let ht = horizontal_time(states[i].t, states[i].x, fruit.x, cell, cfg, v);
            let tp = picking_duration(fruit, cfg);
            let arrival = ordering_floor(vt.max(ht), tp, fruit.z, i, &schedule, map, &cfg.limits);
            let depart = arrival + tp;
            if fruit.x < cfg.x_rear(cell, v, depart) {
                return Err(InfeasiblePick { cell, row: i as u32 + 1, fruit_id: id, speed: v });
            }
            schedule[i].push(ScheduleEntry { fruit_id: id, arrival, depart });
            states[i] = ArmState { x: fruit.x, z: fruit.z, t: depart };
            if depart > makespan {
                makespan = depart;
            }
        }
    }
    Ok(CellSchedule { cell, rows: schedule, makespan })
}

/// Schedule every cell of one candidate at speed `v`.
pub fn schedule_candidate_at_speed(
    candidate: &HarvesterSequence,
    map: &FruitMap,
    cfg: &HarvesterConfig,
    v: f64,
) -> Result<Vec<CellSchedule>, InfeasiblePick> {
    (1..=cfg.cells)
        .map(|cell| schedule_cell_at_speed(cell, candidate.cell_rows(cell, cfg.rows), map, cfg, v))
        .collect()
}

/// Upper bound of the speed search: above `cell_length / max picking
/// duration`, the slowest pick cannot finish before its fruit crosses the
/// whole cell. An empty map has no picks; the bound then falls back to the
/// grasp time (or one step when that is zero) purely to give the search a
/// finite interval.
pub fn speed_upper_bound(map: &FruitMap, cfg: &HarvesterConfig) -> Result<f64, ScheduleError> {
    let mut max_tp: f64 = 0.0;
    for fruit in map.fruits() {
        let tp = picking_duration(fruit, cfg);
        if !(tp.is_finite() && tp > 0.0) {
            return Err(ScheduleError::NonpositivePickingDuration { id: fruit.id });
        }
        if tp > max_tp {
            max_tp = tp;
        }
    }
    if map.is_empty() {
        max_tp = if cfg.td_grasp > 0.0 { cfg.td_grasp } else { cfg.dt };
    }
    Ok(cfg.cell_length / max_tp)
}

/// Find the largest feasible vehicle speed for each candidate by binary
/// search, then keep the candidate with the smallest makespan (ties fall
/// to the earlier candidate). The search halves `[0, upper_bound]` until
/// the bracket is narrower than `epsilon_v`, keeping the largest feasible
/// midpoint and its schedule; if no midpoint is feasible it probes
/// `epsilon_v` itself before giving up.
pub fn plan_velocity_and_schedule(
    candidates: &[HarvesterSequence],
    map: &FruitMap,
    cfg: &HarvesterConfig,
) -> Result<PlanResult, ScheduleError> {
    let violations = cfg.validate();
    if !violations.is_empty() {
        return Err(ScheduleError::InvalidConfig(violations));
    }
    for candidate in candidates {
        for arm in &candidate.arms {
            for entry in &arm.entries {
                if let Some(id) = entry.fruit {
                    if map.get(id).is_none() {
                        return Err(ScheduleError::UnknownFruit { id });
                    }
                }
            }
        }
    }
    let v_cap = speed_upper_bound(map, cfg)?;
    if map.is_empty() {
        return Ok(PlanResult {
            vehicle_speed: v_cap,
            makespan: 0.0,
            strategy: candidates.first().map(|c| c.strategy).unwrap_or(Strategy::Topmost),
            cells: (1..=cfg.cells)
                .map(|cell| CellSchedule { cell, rows: vec![Vec::new(); cfg.rows as usize], makespan: 0.0 })
                .collect(),
        });
    }

    let mut best: Option<PlanResult> = None;
    let mut last_failure: Option<InfeasiblePick> = None;
    for candidate in candidates {
        let mut lo = 0.0_f64;
        let mut hi = v_cap;
        let mut found: Option<(f64, Vec<CellSchedule>)> = None;
        while hi - lo > cfg.epsilon_v {
            let mid = 0.5 * (lo + hi);
            match schedule_candidate_at_speed(candidate, map, cfg, mid) {
                Ok(cells) => {
                    found = Some((mid, cells));
                    lo = mid;
                }
                Err(pick) => {
                    last_failure = Some(pick);
                    hi = mid;
                }
            }
        }
        if found.is_none() {
            // The whole bracket collapsed without a feasible midpoint; try
            // the slowest speed the search resolution can distinguish.
            match schedule_candidate_at_speed(candidate, map, cfg, cfg.epsilon_v) {
                Ok(cells) => found = Some((cfg.epsilon_v, cells)),
                Err(pick) => last_failure = Some(pick),
            }
        }
        if let Some((v, cells)) = found {
            let makespan = cells.iter().map(|c| c.makespan).fold(0.0, f64::max);
            let better = match &best {
                None => true,
                Some(b) => makespan < b.makespan,
            };
            if better {
                best = Some(PlanResult { vehicle_speed: v, makespan, strategy: candidate.strategy, cells });
            }
        }
    }
    best.ok_or(ScheduleError::NoFeasiblePlan { last_failure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Fruit, FruitMap};
    use crate::sequence::generate_candidates;

    fn single_arm_cfg() -> HarvesterConfig {
        HarvesterConfig::new(1, 1)
    }

    fn map_from(cfg: &HarvesterConfig, fruits: Vec<Fruit>) -> FruitMap {
        FruitMap::from_fruits(fruits, cfg).unwrap()
    }

    #[test]
    fn yield_records_are_ordered_along_travel() {
        // Mover is the bottom of three stacked arms, targeting above both.
        let states = [(0.5, 10.0), (1.0, 12.0), (1.5, 14.0)];
        let records = yield_records(0, &states, 0.5, 1.8);
        assert_eq!(records, vec![YieldRecord { z: 1.0, t_free: 12.0 }, YieldRecord { z: 1.5, t_free: 14.0 }]);
        // Downward move reverses the order.
        let down = yield_records(2, &states, 1.5, 0.2);
        assert_eq!(down, vec![YieldRecord { z: 1.0, t_free: 12.0 }, YieldRecord { z: 0.5, t_free: 10.0 }]);
        // Strictly between: endpoints do not block.
        let none = yield_records(0, &[(0.5, 0.0), (1.8, 3.0)], 0.5, 1.8);
        assert!(none.is_empty());
    }

    #[test]
    fn vertical_time_without_yields_is_one_leg() {
        let limits = KinematicLimits { v_max: 1.0, a_max: 1.0 };
        let t = vertical_time(7.0, 1.0, 1.25, &[], &limits);
        assert!((t - 8.0).abs() < 1e-12); // 2*sqrt(0.25) = 1
    }

    #[test]
    fn vertical_time_waits_at_a_yield_point() {
        let limits = KinematicLimits { v_max: 1.0, a_max: 1.0 };
        let t0 = 2.0;
        let yields = [YieldRecord { z: 1.25, t_free: t0 + 5.0 }];
        let t = vertical_time(t0, 1.0, 1.5, &yields, &limits);
        // Reach 1.25 after 1 s, wait until t0+5, then one more 0.25 leg.
        assert!((t - (t0 + 5.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn horizontal_time_free_flight_uses_boosted_peak() {
        let cfg = single_arm_cfg();
        let v = 0.1;
        // Arm well clear of the front edge: start far behind it.
        let x_cur = cfg.x_front(1, v, 0.0) - 3.0;
        let t = horizontal_time(0.0, x_cur, x_cur + 2.0, 1, &cfg, v);
        // d=2 at peak 1.1: 2/1.1 + 1.1 = 2.9182
        assert!((t - (2.0 / 1.1 + 1.1)).abs() < 1e-9, "got {t}");
    }

    #[test]
    fn horizontal_time_rides_the_front_edge() {
        let cfg = single_arm_cfg();
        let v = 0.1;
        // Arm exactly at the front edge at t=0, fruit 2 m ahead.
        let x_cur = cfg.x_front(1, v, 0.0);
        let x_to = x_cur + 2.0;
        let t = horizontal_time(0.0, x_cur, x_to, 1, &cfg, v);
        let ride = (x_to - cfg.x_front(1, v, 0.0)) / v + v / (2.0 * cfg.limits.a_max);
        assert!((t - ride).abs() < 1e-9, "got {t}, want {ride}");
        assert!(t >= (x_to - cfg.x_front(1, v, 0.0)) / v); // never before entry
    }

    #[test]
    fn horizontal_time_frame_limited_never_beats_the_flight() {
        let cfg = single_arm_cfg();
        let v = 0.1;
        // Arm hugging the front edge, target just behind it (backward move):
        // the ride formula alone would land in the past.
        let t0 = 50.0;
        let x_cur = cfg.x_front(1, v, t0) - 0.1;
        let x_to = x_cur - 0.4;
        let t = horizontal_time(t0, x_cur, x_to, 1, &cfg, v);
        let flight = t0 + trapezoid_time(0.4, cfg.limits.v_max + v, cfg.limits.a_max);
        assert!((t - flight).abs() < 1e-9, "got {t}, want {flight}");
    }

    #[test]
    fn single_fruit_schedule_times_the_pick() {
        let cfg = single_arm_cfg();
        let v = 0.05;
        let init = cfg.initial_arm_states[0];
        // Fruit at the arm's own height, a little ahead of it, zero depth.
        let fruit = Fruit { id: 0, x: init.x + 0.2, y: 0.0, z: init.z };
        let map = map_from(&cfg, vec![fruit]);
        let cands = generate_candidates(&map, &cfg);
        let cells = schedule_candidate_at_speed(&cands[0], &map, &cfg, v).unwrap();
        let entry = cells[0].rows[0][0];
        let expect_arrival = horizontal_time(0.0, init.x, fruit.x, 1, &cfg, v);
        assert!((entry.arrival - expect_arrival).abs() < 1e-12);
        assert!((entry.depart - (entry.arrival + cfg.td_grasp)).abs() < 1e-12);
        assert!((cells[0].makespan - entry.depart).abs() < 1e-12);
    }

    #[test]
    fn fruit_behind_the_rear_edge_is_infeasible_at_any_speed() {
        let mut cfg = single_arm_cfg();
        cfg.initial_arm_states[0].x = cfg.x_rear(1, 0.0, 0.0) + 0.05;
        let fruit = Fruit { id: 0, x: cfg.x_rear(1, 0.0, 0.0) - 0.3, y: 0.0, z: 1.0 };
        let map = map_from(&cfg, vec![fruit]);
        let cands = generate_candidates(&map, &cfg);
        let err = schedule_candidate_at_speed(&cands[0], &map, &cfg, 0.05).unwrap_err();
        assert_eq!(err.fruit_id, 0);
        assert_eq!(err.cell, 1);
    }

    #[test]
    fn plan_empty_map_returns_upper_bound_speed() {
        let cfg = single_arm_cfg();
        let map = map_from(&cfg, Vec::new());
        let cands = generate_candidates(&map, &cfg);
        let plan = plan_velocity_and_schedule(&cands, &map, &cfg).unwrap();
        assert_eq!(plan.makespan, 0.0);
        let cap = speed_upper_bound(&map, &cfg).unwrap();
        assert_eq!(plan.vehicle_speed, cap);
        assert!(plan.cells.iter().all(|c| c.rows.iter().all(Vec::is_empty)));
    }

    #[test]
    fn plan_speed_is_maximal_within_epsilon() {
        let cfg = single_arm_cfg();
        let fruits: Vec<Fruit> = (0..12)
            .map(|i| Fruit { id: i, x: 0.3 * i as f64, y: 0.2, z: 0.5 + 0.1 * (i % 5) as f64 })
            .collect();
        let map = map_from(&cfg, fruits);
        let cands = generate_candidates(&map, &cfg);
        let plan = plan_velocity_and_schedule(&cands, &map, &cfg).unwrap();
        let winner = cands.iter().find(|c| c.strategy == plan.strategy).unwrap();
        assert!(schedule_candidate_at_speed(winner, &map, &cfg, plan.vehicle_speed).is_ok());
        assert!(
            schedule_candidate_at_speed(winner, &map, &cfg, plan.vehicle_speed + cfg.epsilon_v).is_err(),
            "one epsilon faster should be infeasible"
        );
        let cap = speed_upper_bound(&map, &cfg).unwrap();
        assert!(plan.vehicle_speed > 0.0 && plan.vehicle_speed <= cap);
    }

    #[test]
    fn plan_makespan_matches_the_slowest_cell() {
        let cfg = HarvesterConfig::new(2, 2);
        let fruits: Vec<Fruit> = (0..16)
            .map(|i| Fruit { id: i, x: 0.25 * i as f64, y: 0.1, z: 0.2 + 0.11 * (i % 8) as f64 })
            .collect();
        let map = map_from(&cfg, fruits);
        let cands = generate_candidates(&map, &cfg);
        let plan = plan_velocity_and_schedule(&cands, &map, &cfg).unwrap();
        let worst = plan.cells.iter().map(|c| c.makespan).fold(0.0, f64::max);
        assert_eq!(plan.makespan, worst);
        // Every arrival strictly increases along each row.
        for cell in &plan.cells {
            for row in &cell.rows {
                for pair in row.windows(2) {
                    assert!(pair[1].arrival > pair[0].arrival);
                    assert!(pair[0].depart > pair[0].arrival);
                }
            }
        }
    }

    #[test]
    fn inverted_adjacent_dwells_never_overlap() {
        // Dense two-cell harvester: rows drift apart in wall time, so a
        // lower arm can come due at a height an upper neighbour still
        // occupies. Committed dwells that invert adjacent rows must stay
        // disjoint with the travel leg between them, or the arms would
        // have to pass through each other.
        use crate::scenario::{generate_uniform, ScenarioSpec};
        let spec =
            ScenarioSpec { row_length: 10.0, height: 2.0, depth: 1.2, density: 30.0, seed: 303 };
        let cfg = HarvesterConfig::new(3, 2);
        let map = generate_uniform(&spec, &cfg).unwrap();
        let cands = generate_candidates(&map, &cfg);
        let plan = plan_velocity_and_schedule(&cands, &map, &cfg).unwrap();
        let z_of = |id| map.get(id).unwrap().z;
        for cell in &plan.cells {
            for (low, high) in cell.rows.iter().zip(cell.rows.iter().skip(1)) {
                for a in low {
                    for b in high {
                        let (za, zb) = (z_of(a.fruit_id), z_of(b.fruit_id));
                        if za <= zb {
                            continue;
                        }
                        let leg = trapezoid_time(za - zb, cfg.limits.v_max, cfg.limits.a_max);
                        let apart = a.depart + leg <= b.arrival + 1e-9
                            || b.depart + leg <= a.arrival + 1e-9;
                        assert!(apart, "inverted dwells overlap: {a:?} above {b:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn stacked_fruits_force_a_yield_wait() {
        // Two arms; the bottom arm's fruit sits above the top arm's start,
        // so the bottom arm must wait for the top arm to clear.
        let cfg = HarvesterConfig::new(2, 1);
        let z_bot = cfg.initial_arm_states[0].z; // 0.5
        let z_top = cfg.initial_arm_states[1].z; // 1.5
        let v = 0.02;
        // Bottom arm's fruit above the top arm's initial height; top arm's
        // fruit higher still (keeps the zone deadlock-free).
        let f_low = Fruit { id: 0, x: -0.4, y: 0.0, z: z_top + 0.2 };
        let f_high = Fruit { id: 1, x: -0.35, y: 0.0, z: z_top + 0.4 };
        let map = map_from(&cfg, vec![f_low, f_high]);
        let cands = generate_candidates(&map, &cfg);
        let cells = schedule_candidate_at_speed(&cands[0], &map, &cfg, v).unwrap();
        let bottom = cells[0].rows[0][0];
        // The top arm leaves its start only when it departs its own fruit.
        let top = cells[0].rows[1][0];
        let records = [YieldRecord { z: z_top, t_free: 0.0 }];
        let naive = vertical_time(0.0, z_bot, f_low.z, &records, &cfg.limits);
        assert!(bottom.arrival >= naive - 1e-12);
        // And the top arm is not delayed by anyone.
        let top_expect = vertical_time(0.0, z_top, f_high.z, &[], &cfg.limits)
            .max(horizontal_time(0.0, cfg.initial_arm_states[1].x, f_high.x, 1, &cfg, v));
        assert!((top.arrival - top_expect).abs() < 1e-12);
    }
}
