//! Minimum-effort trajectory generation from schedules.
//!
//! Each cell's schedule is turned into discrete-time arm trajectories by
//! linear programming: decision variables are position, velocity, and a
//! split acceleration per arm per timestep, the objective is the summed
//! acceleration magnitude, and the constraints are the double-integrator
//! update equations, velocity and acceleration limits, the moving cell
//! frame in x, the shared vertical workspace in z, the bottom-up ordering
//! between arms of one cell, and exact position pins while an arm dwells
//! at a fruit.
//!
//! Cells never constrain each other, so they solve independently (and in
//! parallel). Within a cell the x channel of each arm is independent too;
//! z channels are solved per arm first and re-solved jointly only when
//! the per-arm solutions actually violate the ordering. For long
//! horizons the program is additionally split in time at indices where
//! every arm is either settled in a dwell or parked after its last pick:
//! there the optimum is stationary, so the windows join with zero
//! velocity and pinned (or bound-carried) positions.

use rayon::prelude::*;
use serde::Serialize;

use crate::lp::{LinearProgram, LpError, LpOutcome, Relation, VarId};
use crate::model::{ArmId, FruitId, FruitMap, HarvesterConfig};
use crate::motion::trapezoid_time;
use crate::schedule::{CellSchedule, PlanResult, ScheduleEntry};

/// Time-splitting policy for long horizons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Windowing {
    /// Split when the horizon is long enough to be worth it.
    #[default]
    Auto,
    /// Always solve each cell as one program over the full horizon.
    Off,
    /// Split at every eligible point past the target width.
    On,
}

/// Tuning knobs for [`generate_trajectories_with`].
#[derive(Debug, Clone, Copy)]
pub struct LpOptions {
    pub windowing: Windowing,
    /// Desired window width in timesteps when splitting.
    pub target_window: usize,
    /// Schedule-shift retries per cell before giving up.
    pub max_retries: u32,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions { windowing: Windowing::Auto, target_window: 64, max_retries: 5 }
    }
}

/// Discretized motion of one arm over a cell's horizon. All arrays have
/// the same length; accelerations at the final index are zero by
/// convention (nothing is integrated past the horizon).
#[derive(Debug, Clone, Serialize)]
pub struct ArmTrajectory {
    pub arm: ArmId,
    pub px: Vec<f64>,
    pub pz: Vec<f64>,
    pub vx: Vec<f64>,
    pub vz: Vec<f64>,
    pub ax: Vec<f64>,
    pub az: Vec<f64>,
}

/// Solved trajectories of one cell, bottom row first, plus the schedule
/// they were generated against (retries may have shifted it from the
/// planner's original) and the attained objective.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySet {
    pub cell: u32,
    pub dt: f64,
    pub vehicle_speed: f64,
    /// Summed acceleration magnitude over all arms, channels, and steps.
    pub objective: f64,
    pub schedule: CellSchedule,
    pub arms: Vec<ArmTrajectory>,
}

impl TrajectorySet {
    /// Number of timesteps (array length).
    pub fn steps(&self) -> usize {
        self.arms.first().map(|a| a.px.len()).unwrap_or(0)
    }
}

/// Identifies one pinned dwell index, for infeasibility diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DwellRef {
    pub cell: u32,
    pub row: u32,
    pub fruit_id: FruitId,
    /// Global timestep of the first violated pin.
    pub ts: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum TrajectoryError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("schedule references fruit {id} missing from the map")]
    UnknownFruit { id: FruitId },
    #[error("cell {cell} has no feasible trajectory after {retries} schedule shifts{}", match .dwell {
        Some(d) => format!(" (first violated dwell: fruit {} in row {} around step {})", d.fruit_id, d.row, d.ts),
        None => String::new(),
    })]
    Infeasible { cell: u32, retries: u32, dwell: Option<DwellRef> },
}

/// Timestep count such that `steps * dt` does not exceed `tau` (with a
/// guard against representation noise on exact multiples).
fn horizon_steps(tau: f64, dt: f64) -> usize {
    ((tau / dt) + 1e-9).floor().max(0.0) as usize
}

/// Pin range of a dwell: arrival rounded up, departure rounded down. A
/// window too short to contain a grid point collapses to the nearest
/// index below the departure, which is always on the reachable side of
/// the moving frame.
fn pin_range(arrival: f64, depart: f64, dt: f64) -> (usize, usize) {
    let first = ((arrival / dt) - 1e-9).ceil().max(0.0) as usize;
    let last = ((depart / dt) + 1e-9).floor().max(0.0) as usize;
    if first <= last {
        (first, last)
    } else {
        (last, last)
    }
}

#[derive(Debug, Clone, Copy)]
struct Pin {
    first: usize,
    last: usize,
    x: f64,
    z: f64,
    fruit_id: FruitId,
    /// Distance from the fruit to the cell's rear edge at the last pinned
    /// step; the arm must be able to outrun the edge from rest afterward.
    slack_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Channel {
    X,
    Z,
}

/// Interface state of one arm channel at a window boundary.
#[derive(Debug, Clone, Copy)]
struct ChannelState {
    p: f64,
    v: f64,
}

/// Everything constant about one cell's program.
struct CellProblem<'a> {
    cfg: &'a HarvesterConfig,
    cell: u32,
    v: f64,
    dt: f64,
    steps: usize,
    /// Per row (bottom-up), in arrival order.
    pins: Vec<Vec<Pin>>,
}

/// How a single window attempt failed.
enum WindowFailure {
    /// LP infeasible (or pin bounds contradictory); retryable.
    Conflict(Option<DwellRef>),
    Lp(LpError),
}

impl<'a> CellProblem<'a> {
    fn new(
        schedule: &CellSchedule,
        map: &FruitMap,
        cfg: &'a HarvesterConfig,
        v: f64,
        tau: f64,
    ) -> Result<Self, TrajectoryError> {
        let dt = cfg.dt;
        let steps = horizon_steps(tau, dt);
        let mut pins = Vec::with_capacity(schedule.rows.len());
        for row in &schedule.rows {
            let mut row_pins = Vec::with_capacity(row.len());
            for entry in row {
                let fruit = map
                    .get(entry.fruit_id)
                    .ok_or(TrajectoryError::UnknownFruit { id: entry.fruit_id })?;
                let (first, last) = pin_range(entry.arrival, entry.depart, dt);
                debug_assert!(last <= steps, "dwell pinned past the horizon");
                let slack_after = fruit.x - cfg.x_rear(schedule.cell, v, last as f64 * dt);
                row_pins.push(Pin {
                    first,
                    last,
                    x: fruit.x,
                    z: fruit.z,
                    fruit_id: entry.fruit_id,
                    slack_after,
                });
            }
            pins.push(row_pins);
        }
        Ok(CellProblem { cfg, cell: schedule.cell, v, dt, steps, pins })
    }

    fn rows(&self) -> usize {
        self.pins.len()
    }

    fn pin_at(&self, row: usize, ts: usize) -> Option<&Pin> {
        self.pins[row].iter().find(|p| p.first <= ts && ts <= p.last)
    }

    fn pin_after(&self, row: usize, ts: usize) -> Option<&Pin> {
        self.pins[row].iter().find(|p| p.first > ts)
    }

    fn pin_before(&self, row: usize, ts: usize) -> Option<&Pin> {
        self.pins[row].iter().rev().find(|p| p.last < ts)
    }

    /// Height the arm holds while idle after `ts`' most recent dwell:
    /// that dwell's z, or the starting height if nothing departed yet.
    fn rest_z_before(&self, row: usize, ts: usize) -> f64 {
        self.pin_before(row, ts).map(|p| p.z).unwrap_or_else(|| {
            self.cfg.initial_arm_states[self.cfg.arm_index(self.cell, row as u32 + 1)].z
        })
    }

    /// Steps a waiting arm needs from rest to reach its next dwell. The
    /// channels regroup concurrently, so this is the slower of the climb
    /// between rest height and target and a worst-case in-frame chase
    /// (killing the frame-relative drift first), padded for index
    /// rounding and the dwell sawtooth at both ends.
    fn regroup_steps(&self, row: usize, ts: usize, next: &Pin) -> usize {
        let lim = &self.cfg.limits;
        let climb =
            trapezoid_time((next.z - self.rest_z_before(row, ts)).abs(), lim.v_max, lim.a_max);
        let chase =
            trapezoid_time(self.cfg.cell_length, lim.v_max, lim.a_max) + self.v / lim.a_max;
        ((climb.max(chase) + 4.0 * self.dt) / self.dt).ceil() as usize
    }

    /// Worst distance by which the advancing rear edge can outrun an arm
    /// that restarts from rest.
    fn rest_start_deficit(&self) -> f64 {
        self.v * self.v / (2.0 * self.cfg.limits.a_max)
    }

    /// Largest sustainable dwell speed: pinned steps force the sawtooth
    /// `v[t+1] = -v[t]`, which costs `2|v|/dt` of acceleration per step.
    fn dwell_speed(&self) -> f64 {
        0.5 * self.cfg.limits.a_max * self.dt
    }

    /// Worst distance by which the advancing rear edge can outrun an arm
    /// that leaves a dwell at forward speed `c` under full acceleration,
    /// sampled at whole steps (only there do the bounds apply).
    fn chase_need(&self, c: f64) -> f64 {
        let a = self.cfg.limits.a_max;
        let dt = self.dt;
        let shortfall = |k: f64| k * dt * (self.v - c) - 0.5 * a * dt * dt * k * k;
        let k_star = ((self.v - c) / (a * dt)).floor().max(0.0);
        shortfall(k_star).max(shortfall(k_star + 1.0)).max(0.0)
    }

    /// Interface x-velocity for `row` at a window cut. Settled arms carry
    /// the value picked when the cut was planned; everyone else rests.
    fn interface_vx(&self, row: usize, ts: usize) -> f64 {
        match self.pin_at(row, ts) {
            Some(pin) => self
                .settled_vx(row, ts, pin)
                .expect("window cuts are only placed where an interface exists"),
            None => 0.0,
        }
    }

    /// Interface x-velocity for an arm settled on `pin` at a prospective
    /// cut `ts`, or `None` when no viable interface exists there. Rest is
    /// preferred; when the rear-edge slack or an adjoining leg rules a
    /// cold restart out, the live sawtooth — signed so the dwell still
    /// exits moving forward — buys back both the chase distance and the
    /// boundary reach. A leg with only rounding slack routinely needs
    /// that reach: the schedule times legs by the continuous law, and on
    /// an odd step count a rest-to-rest profile falls short of it.
    fn settled_vx(&self, row: usize, ts: usize, pin: &Pin) -> Option<f64> {
        let c = self.dwell_speed();
        let hot = if (pin.last - ts).is_multiple_of(2) { c } else { -c };
        [0.0, hot].into_iter().find(|&vx| {
            let exit = if vx == 0.0 { 0.0 } else { c };
            pin.slack_after >= self.chase_need(exit) - 1e-12
                && self.frozen_legs_fit(row, pin, ts, vx)
        })
    }

    /// A cut through a dwell freezes its sawtooth: the interface value at
    /// the boundary propagates to every pinned step, because consecutive
    /// position pins force `v[t+1] = -v[t]`. The cut is only affordable
    /// when both adjoining legs still fit the discrete dynamics with the
    /// frozen boundary speeds.
    fn frozen_legs_fit(&self, row: usize, pin: &Pin, ts: usize, vx: f64) -> bool {
        let lim = &self.cfg.limits;
        let (a, dt) = (lim.a_max, self.dt);
        // Alternation ties every pinned step's speed to the value at `ts`.
        let vx_exit = if (pin.last - ts).is_multiple_of(2) { vx } else { -vx };
        let vx_first = if (ts - pin.first).is_multiple_of(2) { vx } else { -vx };
        let (xlo, xhi) = (self.v - lim.v_max, self.v + lim.v_max);
        if let Some(next) = self.pin_after(row, pin.last) {
            let n = next.first - pin.last;
            if !leg_fits(n, vx_exit, 0.0, next.x - pin.x, xlo, xhi, a, dt)
                || !leg_fits(n, 0.0, 0.0, next.z - pin.z, -lim.v_max, lim.v_max, a, dt)
            {
                return false;
            }
        }
        if let Some(prev) = self.pin_before(row, pin.first) {
            let n = pin.first - prev.last;
            if !leg_fits(n, 0.0, vx_first, pin.x - prev.x, xlo, xhi, a, dt)
                || !leg_fits(n, 0.0, 0.0, pin.z - prev.z, -lim.v_max, lim.v_max, a, dt)
            {
                return false;
            }
        }
        true
    }

    /// A window boundary is allowed where every arm can carry a known
    /// interface state without losing anything: settled on a dwell with a
    /// viable frozen interface (rest or the live sawtooth); parked after
    /// its last pin (none scheduled at all also counts); or waiting with
    /// its next dwell far enough ahead to regroup from rest wherever the
    /// previous window leaves the arm.
    fn cut_allowed(&self, ts: usize) -> bool {
        self.pins.iter().enumerate().all(|(row, row_pins)| {
            if let Some(pin) = self.pin_at(row, ts) {
                self.settled_vx(row, ts, pin).is_some()
            } else if row_pins.last().map(|p| p.last < ts).unwrap_or(true) {
                true
            } else {
                self.pin_after(row, ts)
                    .is_some_and(|next| next.first >= ts + self.regroup_steps(row, ts, next))
            }
        })
    }

    /// Window boundaries, first `0` and last `steps`, so window `k`
    /// spans `cuts[k]..cuts[k+1]`.
    fn plan_cuts(&self, opts: &LpOptions) -> Vec<usize> {
        let split = match opts.windowing {
            Windowing::Off => false,
            Windowing::On => true,
            Windowing::Auto => self.steps > 3 * opts.target_window,
        };
        if !split {
            return vec![0, self.steps];
        }
        let mut cuts = vec![0];
        let mut start = 0;
        loop {
            let want = start + opts.target_window.max(2);
            if want >= self.steps {
                break;
            }
            match (want..self.steps).find(|&ts| self.cut_allowed(ts)) {
                Some(cut) => {
                    cuts.push(cut);
                    start = cut;
                }
                None => break,
            }
        }
        cuts.push(self.steps);
        cuts
    }

    fn position_bounds(&self, channel: Channel, ts: usize) -> (f64, f64) {
        match channel {
            Channel::X => {
                let t = ts as f64 * self.dt;
                (self.cfg.x_rear(self.cell, self.v, t), self.cfg.x_front(self.cell, self.v, t))
            }
            // The exact program bounds only the bottom and top rows; the
            // ordering makes [0, H] true for every row, so imposing it on
            // per-arm solves loses nothing.
            Channel::Z => (0.0, self.cfg.frame_height),
        }
    }

    fn velocity_bounds(&self, channel: Channel) -> (f64, f64) {
        let vm = self.cfg.limits.v_max;
        match channel {
            Channel::X => (self.v - vm, self.v + vm),
            Channel::Z => (-vm, vm),
        }
    }

    fn pin_value(&self, channel: Channel, pin: &Pin) -> f64 {
        match channel {
            Channel::X => pin.x,
            Channel::Z => pin.z,
        }
    }
}

/// Variable layout of one window model; the id grids are indexed
/// `[arm position in the included-arms list][local step]`.
struct WindowModel {
    lp: LinearProgram,
    p: Vec<Vec<VarId>>,
    v: Vec<Vec<VarId>>,
    a_pos: Vec<Vec<VarId>>,
    a_neg: Vec<Vec<VarId>>,
}

/// One arm-channel's solved window.
struct ChannelSegment {
    p: Vec<f64>,
    v: Vec<f64>,
    a: Vec<f64>,
}

/// Pins as elastic rows instead of hard bounds: used to name the first
/// violated dwell after an infeasible solve.
#[derive(Clone, Copy, PartialEq)]
enum PinMode {
    Hard,
    Elastic,
}

#[allow(clippy::too_many_arguments)]
fn build_window_model(
    prob: &CellProblem,
    channel: Channel,
    arms: &[usize],
    w0: usize,
    w1: usize,
    starts: &[ChannelState],
    terminal_v: Option<&[f64]>,
    ordering_rows: bool,
    pin_mode: PinMode,
) -> Result<(WindowModel, Vec<(VarId, DwellRef)>), WindowFailure> {
    let n = w1 - w0;
    let dt = prob.dt;
    let a_max = prob.cfg.limits.a_max;
    let (v_lo, v_hi) = prob.velocity_bounds(channel);
    let mut lp = LinearProgram::new();
    let mut model = WindowModel {
        lp: LinearProgram::new(),
        p: Vec::with_capacity(arms.len()),
        v: Vec::with_capacity(arms.len()),
        a_pos: Vec::with_capacity(arms.len()),
        a_neg: Vec::with_capacity(arms.len()),
    };
    let mut elastic: Vec<(VarId, DwellRef)> = Vec::new();

    for (k, &arm) in arms.iter().enumerate() {
        let mut p_ids = Vec::with_capacity(n + 1);
        let mut v_ids = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let ts = w0 + i;
            let (mut lo, mut hi) = prob.position_bounds(channel, ts);
            let pin = prob.pin_at(arm, ts);
            if let Some(pin) = pin {
                if pin_mode == PinMode::Hard {
                    let value = prob.pin_value(channel, pin);
                    lo = lo.max(value);
                    hi = hi.min(value);
                }
            } else if channel == Channel::X && terminal_v.is_some() && i == n {
                // Unpinned arm held at the boundary: leave it enough slack
                // to outrun the rear edge from rest in the next window.
                lo += prob.rest_start_deficit() + prob.v * dt;
            } else if channel == Channel::Z && terminal_v.is_some() && i == n && !ordering_rows {
                // Waiting arm held at the boundary: keep it between its
                // rest height and its next target so the regroup bound
                // behind `cut_allowed` stays true. Wandering further is
                // never cheaper, so this costs the optimum nothing. Under
                // ordering rows a neighbour may push the arm out of this
                // band, so the joint model leaves it free instead.
                if let Some(next) = prob.pin_after(arm, w1) {
                    let anchor = prob.rest_z_before(arm, w1);
                    lo = lo.max(anchor.min(next.z));
                    hi = hi.min(anchor.max(next.z));
                }
            }
            if i == 0 {
                lo = starts[k].p;
                hi = starts[k].p;
            }
            if lo > hi {
                if lo - hi < 1e-9 {
                    // Representation noise on an exactly-touching pin.
                    let mid = 0.5 * (lo + hi);
                    lo = mid;
                    hi = mid;
                } else {
                    let dwell = pin.map(|pin| DwellRef {
                        cell: prob.cell,
                        row: arm as u32 + 1,
                        fruit_id: pin.fruit_id,
                        ts,
                    });
                    return Err(WindowFailure::Conflict(dwell));
                }
            }
            p_ids.push(lp.add_var(lo, hi, 0.0));
            let (mut vlo, mut vhi) = (v_lo, v_hi);
            if i == 0 {
                vlo = starts[k].v;
                vhi = starts[k].v;
            } else if i == n {
                if let Some(tv) = terminal_v {
                    vlo = tv[k];
                    vhi = tv[k];
                }
            }
            if vlo > vhi {
                return Err(WindowFailure::Conflict(None));
            }
            v_ids.push(lp.add_var(vlo, vhi, 0.0));
        }
        let mut ap_ids = Vec::with_capacity(n);
        let mut an_ids = Vec::with_capacity(n);
        for _ in 0..n {
            ap_ids.push(lp.add_var(0.0, a_max, 1.0));
            an_ids.push(lp.add_var(0.0, a_max, 1.0));
        }
        for i in 0..n {
            let half = 0.5 * dt * dt;
            lp.add_row(
                Relation::Eq,
                0.0,
                &[
                    (p_ids[i + 1], 1.0),
                    (p_ids[i], -1.0),
                    (v_ids[i], -dt),
                    (ap_ids[i], -half),
                    (an_ids[i], half),
                ],
            );
            lp.add_row(
                Relation::Eq,
                0.0,
                &[(v_ids[i + 1], 1.0), (v_ids[i], -1.0), (ap_ids[i], -dt), (an_ids[i], dt)],
            );
        }
        if pin_mode == PinMode::Elastic {
            for (i, &p_id) in p_ids.iter().enumerate() {
                let ts = w0 + i;
                if let Some(pin) = prob.pin_at(arm, ts) {
                    let value = prob.pin_value(channel, pin);
                    let over = lp.add_var(0.0, f64::INFINITY, 1.0);
                    let under = lp.add_var(0.0, f64::INFINITY, 1.0);
                    lp.add_row(Relation::Eq, value, &[(p_id, 1.0), (over, -1.0), (under, 1.0)]);
                    let reference = DwellRef {
                        cell: prob.cell,
                        row: arm as u32 + 1,
                        fruit_id: pin.fruit_id,
                        ts,
                    };
                    elastic.push((over, reference));
                    elastic.push((under, reference));
                }
            }
        }
        model.p.push(p_ids);
        model.v.push(v_ids);
        model.a_pos.push(ap_ids);
        model.a_neg.push(an_ids);
    }

    if ordering_rows {
        for k in 0..arms.len().saturating_sub(1) {
            debug_assert_eq!(arms[k] + 1, arms[k + 1], "ordering rows need adjacent arms");
            for i in 0..=n {
                lp.add_row(Relation::Ge, 0.0, &[(model.p[k + 1][i], 1.0), (model.p[k][i], -1.0)]);
            }
        }
    }

    model.lp = lp;
    Ok((model, elastic))
}

/// Solve one window model; on infeasibility, re-solve with elastic pins
/// to name the first dwell that cannot hold.
#[allow(clippy::too_many_arguments)]
fn solve_window(
    prob: &CellProblem,
    channel: Channel,
    arms: &[usize],
    w0: usize,
    w1: usize,
    starts: &[ChannelState],
    terminal_v: Option<&[f64]>,
    ordering_rows: bool,
) -> Result<(Vec<ChannelSegment>, f64), WindowFailure> {
    let (model, _) = build_window_model(
        prob,
        channel,
        arms,
        w0,
        w1,
        starts,
        terminal_v,
        ordering_rows,
        PinMode::Hard,
    )?;
    match model.lp.solve().map_err(WindowFailure::Lp)? {
        LpOutcome::Optimal(sol) => {
            let n = w1 - w0;
            let segments = (0..arms.len())
                .map(|k| ChannelSegment {
                    p: model.p[k].iter().map(|&id| sol[id]).collect(),
                    v: model.v[k].iter().map(|&id| sol[id]).collect(),
                    a: (0..n).map(|i| sol[model.a_pos[k][i]] - sol[model.a_neg[k][i]]).collect(),
                })
                .collect();
            Ok((segments, sol.objective))
        }
        LpOutcome::Unbounded => {
            Err(WindowFailure::Lp(LpError::Numerics("bounded trajectory program reported unbounded".into())))
        }
        LpOutcome::Infeasible => {
            let dwell = diagnose_window(prob, channel, arms, w0, w1, starts, terminal_v, ordering_rows);
            eprintln!(
                "DBG infeasible: channel {channel:?} arms {arms:?} window [{w0},{w1}] starts {:?} term_v {:?} dwell {dwell:?}",
                starts.iter().map(|s| (s.p, s.v)).collect::<Vec<_>>(),
                terminal_v
            );
            Err(WindowFailure::Conflict(dwell))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn diagnose_window(
    prob: &CellProblem,
    channel: Channel,
    arms: &[usize],
    w0: usize,
    w1: usize,
    starts: &[ChannelState],
    terminal_v: Option<&[f64]>,
    ordering_rows: bool,
) -> Option<DwellRef> {
    let (model, elastic) = build_window_model(
        prob,
        channel,
        arms,
        w0,
        w1,
        starts,
        terminal_v,
        ordering_rows,
        PinMode::Elastic,
    )
    .ok()?;
    match model.lp.solve() {
        Ok(LpOutcome::Optimal(sol)) => elastic
            .iter()
            .filter(|(id, _)| sol[*id] > 1e-7)
            .map(|&(_, dwell)| dwell)
            .min_by_key(|d| (d.ts, d.row)),
        _ => None,
    }
}

/// Exact reachability of the discrete dynamics along one channel: the
/// largest position gain over `n` steps from boundary speed `v0` into
/// boundary speed `vn`, with every step speed in `[lo, hi]` and per-step
/// speed changes of at most `a·dt`. `None` when the boundary speeds
/// cannot be joined at all. Uses the exact step sum
/// `Δp = dt·(Σ interior v + (v0 + vn)/2)` maximized by the pointwise
/// envelope profile.
fn max_disp(n: usize, v0: f64, vn: f64, lo: f64, hi: f64, a: f64, dt: f64) -> Option<f64> {
    let ramp = a * dt;
    if (vn - v0).abs() > n as f64 * ramp + 1e-12 {
        return None;
    }
    let mut sum = 0.5 * (v0 + vn);
    for i in 1..n {
        let vi = hi.min(v0 + ramp * i as f64).min(vn + ramp * (n - i) as f64);
        if vi < lo - 1e-12 {
            return None;
        }
        sum += vi;
    }
    Some(dt * sum)
}

/// Whether a leg of `delta` metres fits `n` steps of the discrete
/// dynamics between boundary speeds `v0` and `vn`, with channel speeds
/// confined to `[lo, hi]`.
#[allow(clippy::too_many_arguments)]
fn leg_fits(n: usize, v0: f64, vn: f64, delta: f64, lo: f64, hi: f64, a: f64, dt: f64) -> bool {
    let reach = if delta >= 0.0 {
        max_disp(n, v0, vn, lo, hi, a, dt)
    } else {
        max_disp(n, -v0, -vn, -hi, -lo, a, dt)
    };
    reach.is_some_and(|r| r + 1e-9 >= delta.abs())
}

/// Largest ordering violation `z_lower - z_upper` across adjacent rows.
fn ordering_violation(segments: &[ChannelSegment]) -> f64 {
    let mut worst: f64 = 0.0;
    for pair in segments.windows(2) {
        for (lo, hi) in pair[0].p.iter().zip(&pair[1].p) {
            worst = worst.max(lo - hi);
        }
    }
    worst
}

struct CellSolution {
    arms: Vec<ArmTrajectory>,
    objective: f64,
}

/// Solve one window on both channels, write the segments into `arms`,
/// and advance the boundary states. Returns the window's objective.
fn solve_one_window(
    prob: &CellProblem,
    w0: usize,
    w1: usize,
    arms: &mut [ArmTrajectory],
    x_state: &mut [ChannelState],
    z_state: &mut [ChannelState],
) -> Result<f64, WindowFailure> {
    let rows = prob.rows();
    let steps = prob.steps;
    let all: Vec<usize> = (0..rows).collect();
    let mut objective = 0.0;
    // Interface contract at an interior boundary: settled arms keep
    // their dwell sawtooth (or rest, slack permitting), everyone else
    // rests; the z channel always rests. The last window ends free.
    let term_vx: Option<Vec<f64>> =
        (w1 < steps).then(|| (0..rows).map(|r| prob.interface_vx(r, w1)).collect());
    let term_vz: Option<Vec<f64>> = (w1 < steps).then(|| vec![0.0; rows]);

    // x never couples arms: solve each alone.
    let mut x_segments: Vec<ChannelSegment> = Vec::with_capacity(rows);
    for r in 0..rows {
        let (mut seg, obj) = solve_window(
            prob,
            Channel::X,
            &[r],
            w0,
            w1,
            &x_state[r..=r],
            term_vx.as_deref().map(|tv| &tv[r..=r]),
            false,
        )?;
        objective += obj;
        x_segments.push(seg.pop().expect("one arm in, one segment out"));
    }

    // z: per-arm first, joint re-solve only if the ordering broke.
    let mut z_segments: Vec<ChannelSegment> = Vec::with_capacity(rows);
    let mut z_objective = 0.0;
    for r in 0..rows {
        let (mut seg, obj) = solve_window(
            prob,
            Channel::Z,
            &[r],
            w0,
            w1,
            &z_state[r..=r],
            term_vz.as_deref().map(|tv| &tv[r..=r]),
            false,
        )?;
        z_objective += obj;
        z_segments.push(seg.pop().expect("one arm in, one segment out"));
    }
    if rows > 1 && ordering_violation(&z_segments) > 1e-9 {
        let (joint, obj) =
            solve_window(prob, Channel::Z, &all, w0, w1, z_state, term_vz.as_deref(), true)?;
        z_segments = joint;
        z_objective = obj;
    }
    objective += z_objective;

    for r in 0..rows {
        let xs = &x_segments[r];
        let zs = &z_segments[r];
        for i in 0..xs.p.len() {
            let ts = w0 + i;
            arms[r].px[ts] = xs.p[i];
            arms[r].vx[ts] = xs.v[i];
            arms[r].pz[ts] = zs.p[i];
            arms[r].vz[ts] = zs.v[i];
        }
        for i in 0..xs.a.len() {
            let ts = w0 + i;
            arms[r].ax[ts] = xs.a[i];
            arms[r].az[ts] = zs.a[i];
        }
        let last = w1 - w0;
        // Snap the interface to exact pin and contract values so
        // drift cannot accumulate across windows of a long dwell.
        let (px_end, pz_end) = match prob.pin_at(r, w1) {
            Some(pin) => (pin.x, pin.z),
            None => (xs.p[last], zs.p[last]),
        };
        let vx_end = term_vx.as_ref().map_or(xs.v[last], |tv| tv[r]);
        let vz_end = term_vz.as_ref().map_or(zs.v[last], |tv| tv[r]);
        x_state[r] = ChannelState { p: px_end, v: vx_end };
        z_state[r] = ChannelState { p: pz_end, v: vz_end };
    }
    Ok(objective)
}

fn solve_cell_once(prob: &CellProblem, opts: &LpOptions) -> Result<CellSolution, WindowFailure> {
    let rows = prob.rows();
    let steps = prob.steps;
    let mut arms: Vec<ArmTrajectory> = (0..rows)
        .map(|r| ArmTrajectory {
            arm: ArmId { cell: prob.cell, row: r as u32 + 1 },
            px: vec![0.0; steps + 1],
            pz: vec![0.0; steps + 1],
            vx: vec![0.0; steps + 1],
            vz: vec![0.0; steps + 1],
            ax: vec![0.0; steps + 1],
            az: vec![0.0; steps + 1],
        })
        .collect();

    let mut x_state: Vec<ChannelState> = Vec::with_capacity(rows);
    let mut z_state: Vec<ChannelState> = Vec::with_capacity(rows);
    for r in 0..rows {
        let init = &prob.cfg.initial_arm_states[prob.cfg.arm_index(prob.cell, r as u32 + 1)];
        let (vx, vz) = init.velocity_at(prob.v);
        x_state.push(ChannelState { p: init.x, v: vx });
        z_state.push(ChannelState { p: init.z, v: vz });
    }

    let mut cuts = prob.plan_cuts(opts);
    // Boundary states and cumulative objective after each solved window,
    // so a conflicted window can be re-solved merged into its predecessor.
    let mut saved: Vec<(Vec<ChannelState>, Vec<ChannelState>, f64)> =
        vec![(x_state.clone(), z_state.clone(), 0.0)];
    let mut objective = 0.0;
    let mut k = 0;
    let mut budget = 2 * cuts.len() + 8;
    while k + 1 < cuts.len() {
        match solve_one_window(prob, cuts[k], cuts[k + 1], &mut arms, &mut x_state, &mut z_state) {
            Ok(obj) => {
                objective += obj;
                saved.push((x_state.clone(), z_state.clone(), objective));
                k += 1;
            }
            Err(WindowFailure::Lp(e)) => return Err(WindowFailure::Lp(e)),
            Err(conflict) => {
                // The cut test is per-arm and per-leg, so a boundary can
                // still starve a window of freedom it turns out to need.
                // Merging the window into a neighbour removes exactly the
                // constraint the boundary added; in the limit this
                // degenerates to the full horizon, so windowing never
                // fails an instance the whole-span program could solve.
                if budget == 0 {
                    return Err(conflict);
                }
                budget -= 1;
                if k > 0 {
                    // Merge backwards: drop this window's starting cut and
                    // rewind to the boundary before it.
                    cuts.remove(k);
                    saved.pop();
                    k -= 1;
                    let (xs, zs, obj) = saved.last().expect("initial state stays saved");
                    x_state.clone_from(xs);
                    z_state.clone_from(zs);
                    objective = *obj;
                } else if cuts.len() > 2 {
                    // First window: merge forwards instead.
                    cuts.remove(1);
                } else {
                    // Already the full horizon: the conflict is real.
                    return Err(conflict);
                }
            }
        }
    }
    Ok(CellSolution { arms, objective })
}

fn shifted_schedule(schedule: &CellSchedule, delta: f64) -> CellSchedule {
    CellSchedule {
        cell: schedule.cell,
        rows: schedule
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| ScheduleEntry {
                        fruit_id: e.fruit_id,
                        arrival: e.arrival + delta,
                        depart: e.depart + delta,
                    })
                    .collect()
            })
            .collect(),
        makespan: schedule.makespan + delta,
    }
}

fn solve_cell(
    schedule: &CellSchedule,
    map: &FruitMap,
    cfg: &HarvesterConfig,
    v: f64,
    tau: f64,
    opts: &LpOptions,
) -> Result<TrajectorySet, TrajectoryError> {
    let mut last_dwell: Option<DwellRef> = None;
    for retry in 0..=opts.max_retries {
        // Cumulative shift: absorbs grid-rounding mismatch between the
        // continuous schedule and the discrete dynamics.
        let shift = retry as f64 * cfg.dt;
        let effective = if retry == 0 { schedule.clone() } else { shifted_schedule(schedule, shift) };
        let prob = CellProblem::new(&effective, map, cfg, v, tau + shift)?;
        match solve_cell_once(&prob, opts) {
            Ok(solution) => {
                return Ok(TrajectorySet {
                    cell: schedule.cell,
                    dt: cfg.dt,
                    vehicle_speed: v,
                    objective: solution.objective,
                    schedule: effective,
                    arms: solution.arms,
                });
            }
            Err(WindowFailure::Conflict(dwell)) => {
                last_dwell = dwell.or(last_dwell);
            }
            Err(WindowFailure::Lp(e)) => return Err(TrajectoryError::Lp(e)),
        }
    }
    Err(TrajectoryError::Infeasible {
        cell: schedule.cell,
        retries: opts.max_retries,
        dwell: last_dwell,
    })
}

/// Generate trajectories for every cell of a plan with default options.
pub fn generate_trajectories(
    plan: &PlanResult,
    map: &FruitMap,
    cfg: &HarvesterConfig,
) -> Result<Vec<TrajectorySet>, TrajectoryError> {
    generate_trajectories_with(plan, map, cfg, &LpOptions::default())
}

/// Generate trajectories for every cell of a plan. Cells are independent
/// programs and solve in parallel; results come back in cell order.
pub fn generate_trajectories_with(
    plan: &PlanResult,
    map: &FruitMap,
    cfg: &HarvesterConfig,
    opts: &LpOptions,
) -> Result<Vec<TrajectorySet>, TrajectoryError> {
    plan.cells
        .par_iter()
        .map(|cell| solve_cell(cell, map, cfg, plan.vehicle_speed, plan.makespan, opts))
        .collect()
}

/// Write trajectories as CSV: one record per arm per timestep, cells in
/// order, time-major within a cell.
pub fn write_trajectory_csv<W: std::io::Write>(
    out: W,
    sets: &[TrajectorySet],
) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["ts", "t", "cell", "row", "px", "pz", "vx", "vz", "ax", "az"])?;
    for set in sets {
        for ts in 0..set.steps() {
            for arm in &set.arms {
                writer.write_record(&[
                    ts.to_string(),
                    format!("{}", ts as f64 * set.dt),
                    arm.arm.cell.to_string(),
                    arm.arm.row.to_string(),
                    format!("{}", arm.px[ts]),
                    format!("{}", arm.pz[ts]),
                    format!("{}", arm.vx[ts]),
                    format!("{}", arm.vz[ts]),
                    format!("{}", arm.ax[ts]),
                    format!("{}", arm.az[ts]),
                ])?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}
