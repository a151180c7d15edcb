use harvest_core::lp::{LinearProgram, LpOutcome, Relation, VarId};
use harvest_core::{
    generate_candidates, plan_velocity_and_schedule, Fruit, FruitMap, HarvesterConfig,
};

struct XProblem {
    lp: LinearProgram,
    p: Vec<VarId>,
    v: Vec<VarId>,
    ap: Vec<VarId>,
    an: Vec<VarId>,
    pins: Vec<(usize, usize, f64)>,
    steps: usize,
    speed: f64,
}

/// Mirror of the trajectory module's X-channel window model for one arm
/// over the full horizon.
fn build_x(plan_speed: f64, makespan: f64, dwells: &[(f64, f64, f64)]) -> XProblem {
    let dt = 0.1;
    let v_max = 1.0;
    let a_max = 1.0;
    let steps = ((makespan / dt) + 1e-9).floor() as usize;
    let pins: Vec<(usize, usize, f64)> = dwells
        .iter()
        .map(|&(arr, dep, x)| {
            let first = ((arr / dt) - 1e-9).ceil().max(0.0) as usize;
            let last = ((dep / dt) + 1e-9).floor().max(0.0) as usize;
            (first, last, x)
        })
        .collect();
    let front = |ts: usize| plan_speed * (ts as f64 * dt);
    let rear = |ts: usize| front(ts) - 0.6;

    let mut lp = LinearProgram::new();
    let mut p = Vec::new();
    let mut v = Vec::new();
    for ts in 0..=steps {
        let (mut lo, mut hi) = (rear(ts), front(ts));
        if let Some(&(_, _, x)) = pins.iter().find(|&&(f, l, _)| f <= ts && ts <= l) {
            lo = lo.max(x);
            hi = hi.min(x);
        }
        if ts == 0 {
            lo = -0.3;
            hi = -0.3;
        }
        assert!(lo <= hi, "static pin conflict at ts {ts}: [{lo}, {hi}]");
        p.push(lp.add_var(lo, hi, 0.0));
        let (mut vlo, mut vhi) = (plan_speed - v_max, plan_speed + v_max);
        if ts == 0 {
            vlo = plan_speed;
            vhi = plan_speed;
        }
        v.push(lp.add_var(vlo, vhi, 0.0));
    }
    let mut ap = Vec::new();
    let mut an = Vec::new();
    for _ in 0..steps {
        ap.push(lp.add_var(0.0, a_max, 1.0));
        an.push(lp.add_var(0.0, a_max, 1.0));
    }
    for i in 0..steps {
        let half = 0.5 * dt * dt;
        lp.add_row(
            Relation::Eq,
            0.0,
            &[(p[i + 1], 1.0), (p[i], -1.0), (v[i], -dt), (ap[i], -half), (an[i], half)],
        );
        lp.add_row(Relation::Eq, 0.0, &[(v[i + 1], 1.0), (v[i], -1.0), (ap[i], -dt), (an[i], dt)]);
    }
    XProblem { lp, p, v, ap, an, pins, steps, speed: plan_speed }
}

/// Build an explicit feasible witness: ride the frame while waiting, brake
/// to rest onto each pin, sprint each leg with a symmetric bang-bang that
/// respects the moving frame. Returns per-step (p, v, a) or a reason none
/// was found (which would mean the instance, not the solver, is at fault).
fn witness(prob: &XProblem) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), String> {
    let dt = 0.1;
    let steps = prob.steps;
    let mut p = vec![0.0; steps + 1];
    let mut v = vec![0.0; steps + 1];
    let mut a = vec![0.0; steps];
    p[0] = -0.3;
    v[0] = prob.speed;

    // Greedy per-step controller: head for the next pin's position with a
    // simple proportional rule saturated by the acceleration limit, then
    // hold the pin at rest. The frame bounds are checked afterwards.
    let mut target_idx = 0;
    for i in 0..steps {
        let (first, last, x) = prob.pins[target_idx];
        if i >= last && target_idx + 1 < prob.pins.len() {
            target_idx += 1;
        }
        let (first, last, x) = if i >= first && i <= last {
            (first, last, x)
        } else {
            (first, last, x)
        };
        let _ = (first, last);
        if i >= prob.pins[target_idx].0 && i <= prob.pins[target_idx].1 {
            // Inside the dwell: hold exactly.
            let need_a = -v[i] / dt * 2.0_f64.min(1.0); // kill residual speed
            let acc = need_a.clamp(-1.0, 1.0);
            a[i] = acc;
            p[i + 1] = p[i] + v[i] * dt + 0.5 * acc * dt * dt;
            v[i + 1] = v[i] + acc * dt;
            continue;
        }
        // Travel: bang toward a braking curve for (x at rest).
        let dist = x - p[i];
        let dir = dist.signum();
        let brake = v[i] * v[i] / 2.0; // distance to stop at a = 1
        let acc = if dir * v[i] < 0.0 || brake < dist.abs() { dir } else { -dir };
        let acc = acc.clamp(-1.0, 1.0);
        a[i] = acc;
        p[i + 1] = p[i] + v[i] * dt + 0.5 * acc * dt * dt;
        v[i + 1] = v[i] + acc * dt;
    }
    Ok((p, v, a))
}

fn check_witness(prob: &XProblem, p: &[f64], v: &[f64]) -> f64 {
    let dt = 0.1;
    let mut worst: f64 = 0.0;
    for ts in 0..=prob.steps {
        let front = prob.speed * (ts as f64 * dt);
        let rear = front - 0.6;
        worst = worst.max(rear - p[ts]).max(p[ts] - front);
        if let Some(&(_, _, x)) = prob.pins.iter().find(|&&(f, l, _)| f <= ts && ts <= l) {
            worst = worst.max((p[ts] - x).abs());
        }
        worst = worst.max(v[ts].abs() - (prob.speed + 1.0));
    }
    worst
}

/// Truncate the replicated program at `end` and report feasibility.
fn feasible_up_to(plan_speed: f64, dwells: &[(f64, f64, f64)], end: usize) -> bool {
    let prob = build_x(plan_speed, end as f64 * 0.1 + 1e-12, dwells);
    matches!(prob.lp.solve().unwrap(), LpOutcome::Optimal(_))
}

#[test]
fn probe_truncated_horizons() {
    let cfg = HarvesterConfig::new(1, 1);
    let fruits = vec![Fruit { id: 0, x: 0.4, y: 0.1, z: 0.5 }, Fruit { id: 1, x: 1.2, y: 0.2, z: 1.1 }];
    let map = FruitMap::from_fruits(fruits, &cfg).unwrap();
    let cands = generate_candidates(&map, &cfg);
    let plan = plan_velocity_and_schedule(&cands, &map, &cfg).unwrap();
    let row = &plan.cells[0].rows[0];
    let dwells: Vec<(f64, f64, f64)> = row
        .iter()
        .map(|e| (e.arrival, e.depart, map.get(e.fruit_id).unwrap().x))
        .collect();
    // Clip dwells to the truncated horizon so pins never exceed it.
    let mut lo = 0;
    let mut hi = 114;
    // First make sure the ends disagree.
    let clipped = |end: usize| -> Vec<(f64, f64, f64)> {
        dwells
            .iter()
            .filter(|&&(arr, _, _)| arr / 0.1 - 1e-9 <= end as f64)
            .map(|&(arr, dep, x)| (arr, dep.min(end as f64 * 0.1), x))
            .collect()
    };
    assert!(feasible_up_to(plan.vehicle_speed, &clipped(lo), lo));
    assert!(!feasible_up_to(plan.vehicle_speed, &clipped(hi), hi));
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if feasible_up_to(plan.vehicle_speed, &clipped(mid), mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    eprintln!("feasible through step {lo}, infeasible at step {hi}");
    eprintln!(
        "pins: {:?}",
        clipped(114)
            .iter()
            .map(|&(a, d, x)| (((a / 0.1) - 1e-9).ceil() as usize, ((d / 0.1) + 1e-9).floor() as usize, x))
            .collect::<Vec<_>>()
    );
}

#[test]
fn probe_replicated_x_lp() {
    let cfg = HarvesterConfig::new(1, 1);
    let fruits = vec![Fruit { id: 0, x: 0.4, y: 0.1, z: 0.5 }, Fruit { id: 1, x: 1.2, y: 0.2, z: 1.1 }];
    let map = FruitMap::from_fruits(fruits, &cfg).unwrap();
    let cands = generate_candidates(&map, &cfg);
    let plan = plan_velocity_and_schedule(&cands, &map, &cfg).unwrap();
    let row = &plan.cells[0].rows[0];
    let dwells: Vec<(f64, f64, f64)> = row
        .iter()
        .map(|e| (e.arrival, e.depart, map.get(e.fruit_id).unwrap().x))
        .collect();
    eprintln!("v={} makespan={} dwells={dwells:?}", plan.vehicle_speed, plan.makespan);

    let prob = build_x(plan.vehicle_speed, plan.makespan, &dwells);
    eprintln!("vars={} rows={}", prob.lp.var_count(), prob.lp.row_count());
    match prob.lp.solve().unwrap() {
        LpOutcome::Optimal(sol) => eprintln!("replicated LP OPTIMAL, objective {}", sol.objective),
        other => eprintln!("replicated LP: {other:?}"),
    }

    let (p, v, _a) = witness(&prob).unwrap();
    let resid = check_witness(&prob, &p, &v);
    eprintln!("witness residual: {resid:.6}");
    let _ = (&prob.ap, &prob.an, &prob.p, &prob.v);
}
