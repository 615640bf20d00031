//! Constraint-by-constraint schedule checker.
//!
//! Violations carry the constraint family id used in the formulation: `5a`–`5c` maneuver flow
//! and budget, `6a`–`6e` visibility gating and task exclusion, `7a`–`7d` data tracking and
//! bounds, `8a`–`8c` battery tracking, `9a`–`9d` battery bounds, and `3b`–`3g` variable domains.
//! Two ids have no counterpart there: `d0` pins the first data level to the carried-in value and
//! `obj` flags a stored objective that disagrees with the events.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{SatelliteSchedule, Schedule, ScheduleInstance, SolverStatus, BUDGET_EPS};

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub satellite: usize,
    pub stage: Option<usize>,
    pub step: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
    pub message: String,
}

/// Objective contribution of one satellite, recomputed from its events.
pub fn satellite_objective(sat: &SatelliteSchedule, inst: &ScheduleInstance) -> f64 {
    let mut counts = vec![0usize; inst.aux_weights.len()];
    for e in &sat.aux_visibility {
        if let Some(c) = counts.get_mut(e.object) {
            *c += 1;
        }
    }
    let aux: f64 = counts
        .iter()
        .zip(&inst.aux_weights)
        .map(|(&n, &o)| o * n as f64)
        .sum();
    inst.downlink_weight * sat.downlinks.len() as f64 + sat.observations.len() as f64 + aux
}

pub fn objective(schedule: &Schedule, inst: &ScheduleInstance) -> f64 {
    schedule
        .satellites
        .iter()
        .map(|s| satellite_objective(s, inst))
        .sum()
}

/// Every violated constraint; empty if and only if the schedule is feasible.
pub fn validate_schedule(schedule: &Schedule, inst: &ScheduleInstance) -> Vec<Violation> {
    let mut out = check(schedule, inst, inst.horizon.steps());
    if schedule.satellites.len() == inst.satellites() {
        let z = objective(schedule, inst);
        if (schedule.z - z).abs() > TOL {
            out.push(Violation {
                constraint: "obj".into(),
                satellite: 0,
                stage: None,
                step: None,
                lhs: schedule.z,
                rhs: z,
                message: "stored objective differs from the events".into(),
            });
        }
    }
    out
}

/// Checks steps before `upto` only (plus the level at `upto` that they produce).
pub(crate) fn check(schedule: &Schedule, inst: &ScheduleInstance, upto: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    if schedule.satellites.len() != inst.satellites() {
        out.push(Violation {
            constraint: "5a".into(),
            satellite: 0,
            stage: None,
            step: None,
            lhs: schedule.satellites.len() as f64,
            rhs: inst.satellites() as f64,
            message: "schedule and instance disagree on the number of satellites".into(),
        });
        return out;
    }
    for (k, sat) in schedule.satellites.iter().enumerate() {
        if is_placeholder(sat) {
            continue;
        }
        check_satellite(sat, inst, k, upto, &mut out);
    }
    out
}

/// An infeasible satellite carries no plan, so there is nothing to check.
fn is_placeholder(sat: &SatelliteSchedule) -> bool {
    sat.status == SolverStatus::Infeasible
        && sat.data.is_empty()
        && sat.battery.is_empty()
        && sat.observations.is_empty()
        && sat.downlinks.is_empty()
        && sat.charges.is_empty()
}

#[derive(Default)]
struct StepLoad {
    obs: usize,
    down: usize,
    charge: usize,
}

fn check_satellite(
    sat: &SatelliteSchedule,
    inst: &ScheduleInstance,
    k: usize,
    upto: usize,
    out: &mut Vec<Violation>,
) {
    let h = &inst.horizon;
    let r = &inst.resources;
    let dims = &inst.tensors.dims;
    let mut push =
        |id: &str, stage: Option<usize>, step: Option<usize>, lhs: f64, rhs: f64, msg: String| {
            out.push(Violation {
                constraint: id.into(),
                satellite: k,
                stage,
                step,
                lhs,
                rhs,
                message: msg,
            })
        };

    // maneuver flow: one in-range slot per stage, total cost within budget
    if sat.slots.len() != h.stages {
        push(
            "5a",
            None,
            None,
            sat.slots.len() as f64,
            h.stages as f64,
            "slot path length differs from the stage count".into(),
        );
        return;
    }
    let mut path_ok = true;
    for (s, &j) in sat.slots.iter().enumerate() {
        if j >= dims.slots[k] {
            push(
                "5b",
                Some(s),
                None,
                j as f64,
                dims.slots[k] as f64,
                format!("slot {j} does not exist"),
            );
            path_ok = false;
        }
    }
    if !path_ok {
        return;
    }
    let cost = inst.costs[k].path_cost(&sat.slots);
    if cost > inst.costs[k].budget + BUDGET_EPS {
        push(
            "5c",
            None,
            None,
            cost,
            inst.costs[k].budget,
            "maneuver cost exceeds the budget".into(),
        );
    }

    let global = |s: usize, t: usize| s * h.steps_per_stage + t;
    let mut load: BTreeMap<usize, StepLoad> = BTreeMap::new();
    let in_range = |s: usize, t: usize| s < h.stages && t < h.steps_per_stage;

    let mut seen = std::collections::HashSet::new();
    for e in &sat.observations {
        if !in_range(e.stage, e.step) || e.object >= dims.n_priority || !seen.insert(("y", *e)) {
            push(
                "3b",
                Some(e.stage),
                Some(e.step),
                e.object as f64,
                dims.n_priority as f64,
                "observation outside its domain or repeated".into(),
            );
            continue;
        }
        if global(e.stage, e.step) >= upto {
            continue;
        }
        if !inst
            .tensors
            .priority(e.stage, k, e.step, sat.slots[e.stage], e.object)
        {
            push(
                "6a",
                Some(e.stage),
                Some(e.step),
                0.0,
                1.0,
                format!("target {} not visible", e.object),
            );
        }
        load.entry(global(e.stage, e.step)).or_default().obs += 1;
    }
    for e in &sat.downlinks {
        if !in_range(e.stage, e.step) || e.object >= dims.n_stations || !seen.insert(("q", *e)) {
            push(
                "3c",
                Some(e.stage),
                Some(e.step),
                e.object as f64,
                dims.n_stations as f64,
                "downlink outside its domain or repeated".into(),
            );
            continue;
        }
        if global(e.stage, e.step) >= upto {
            continue;
        }
        if !inst
            .tensors
            .station(e.stage, k, e.step, sat.slots[e.stage], e.object)
        {
            push(
                "6b",
                Some(e.stage),
                Some(e.step),
                0.0,
                1.0,
                format!("station {} not visible", e.object),
            );
        }
        load.entry(global(e.stage, e.step)).or_default().down += 1;
    }
    for e in &sat.aux_visibility {
        if !in_range(e.stage, e.step) || e.object >= dims.n_aux || !seen.insert(("a", *e)) {
            push(
                "3e",
                Some(e.stage),
                Some(e.step),
                e.object as f64,
                dims.n_aux as f64,
                "auxiliary sighting outside its domain or repeated".into(),
            );
            continue;
        }
        if global(e.stage, e.step) >= upto {
            continue;
        }
        if !inst
            .tensors
            .auxiliary(e.stage, k, e.step, sat.slots[e.stage], e.object)
        {
            push(
                "6c",
                Some(e.stage),
                Some(e.step),
                0.0,
                1.0,
                format!("auxiliary target {} not visible", e.object),
            );
        }
    }
    let mut charged = std::collections::HashSet::new();
    for e in &sat.charges {
        if !in_range(e.stage, e.step) || !charged.insert(*e) {
            push(
                "3d",
                Some(e.stage),
                Some(e.step),
                0.0,
                0.0,
                "charge outside its domain or repeated".into(),
            );
            continue;
        }
        if global(e.stage, e.step) >= upto {
            continue;
        }
        if !inst.tensors.sun(e.stage, k, e.step, sat.slots[e.stage]) {
            push(
                "6d",
                Some(e.stage),
                Some(e.step),
                0.0,
                1.0,
                "charging without sun".into(),
            );
        }
        load.entry(global(e.stage, e.step)).or_default().charge += 1;
    }
    for (&g, l) in &load {
        let n = l.obs + l.down + l.charge;
        if n > 1 {
            let (s, t) = h.split(g);
            push(
                "6e",
                Some(s),
                Some(t),
                n as f64,
                1.0,
                "more than one task in a step".into(),
            );
        }
    }

    // resource trajectories
    let steps = h.steps();
    if sat.data.len() != steps {
        push(
            "3f",
            None,
            None,
            sat.data.len() as f64,
            steps as f64,
            "data trajectory length differs from the horizon".into(),
        );
    }
    if sat.battery.len() != steps {
        push(
            "3g",
            None,
            None,
            sat.battery.len() as f64,
            steps as f64,
            "battery trajectory length differs from the horizon".into(),
        );
    }
    if sat.data.len() != steps || sat.battery.len() != steps {
        return;
    }
    let start = inst.start[k];
    let b_first = start.battery - r.b_recon;
    if (sat.data[0] - start.data).abs() > TOL {
        push(
            "d0",
            Some(0),
            Some(0),
            sat.data[0],
            start.data,
            "first data level differs from the carried-in level".into(),
        );
    }
    if (sat.battery[0] - b_first).abs() > TOL {
        push(
            "8c",
            Some(0),
            Some(0),
            sat.battery[0],
            b_first,
            "first battery level must be the carried-in level less one maneuver".into(),
        );
    }
    if b_first < r.b_min - TOL {
        push(
            "9d",
            Some(0),
            Some(0),
            b_first,
            r.b_min,
            "first maneuver drains the battery below its minimum".into(),
        );
    }
    let empty = StepLoad::default();
    for g in 0..upto.min(steps) {
        let (s, t) = h.split(g);
        let l = load.get(&g).unwrap_or(&empty);
        let (y, q, hc) = (l.obs as f64, l.down as f64, l.charge as f64);
        let (d, b) = (sat.data[g], sat.battery[g]);
        let (st, sp) = (Some(s), Some(t));
        if d < r.d_min - TOL || d > r.d_max + TOL {
            push(
                "3f",
                st,
                sp,
                d,
                if d < r.d_min { r.d_min } else { r.d_max },
                "data level out of bounds".into(),
            );
        }
        if b < r.b_min - TOL || b > r.b_max + TOL {
            push(
                "3g",
                st,
                sp,
                b,
                if b < r.b_min { r.b_min } else { r.b_max },
                "battery level out of bounds".into(),
            );
        }
        let lhs = d + r.d_obs * y;
        if lhs > r.d_max + TOL {
            push(
                "7c",
                st,
                sp,
                lhs,
                r.d_max,
                "observation overflows data storage".into(),
            );
        }
        let lhs = d - r.d_comm * q;
        if lhs < r.d_min - TOL {
            push(
                "7d",
                st,
                sp,
                lhs,
                r.d_min,
                "downlink drains data storage below its minimum".into(),
            );
        }
        let lhs = b + r.b_charge * hc;
        if lhs > r.b_max + TOL {
            push(
                "9a",
                st,
                sp,
                lhs,
                r.b_max,
                "charging overfills the battery".into(),
            );
        }
        let maneuver = h.precedes_maneuver(g);
        let recon = if maneuver { r.b_recon } else { 0.0 };
        let lhs = b - r.b_obs * y - r.b_comm * q - recon - r.b_time;
        if lhs < r.b_min - TOL {
            let id = if maneuver { "9c" } else { "9b" };
            push(
                id,
                st,
                sp,
                lhs,
                r.b_min,
                "step drains the battery below its minimum".into(),
            );
        }
        if g + 1 < steps {
            let next_d = d + r.d_obs * y - r.d_comm * q;
            if (sat.data[g + 1] - next_d).abs() > TOL {
                let id = if maneuver || t + 1 == h.steps_per_stage {
                    "7b"
                } else {
                    "7a"
                };
                push(
                    id,
                    st,
                    sp,
                    sat.data[g + 1],
                    next_d,
                    "data level does not follow from the step's tasks".into(),
                );
            }
            let next_b = b + r.b_charge * hc - r.b_obs * y - r.b_comm * q - recon - r.b_time;
            if (sat.battery[g + 1] - next_b).abs() > TOL {
                let id = if maneuver { "8b" } else { "8a" };
                push(
                    id,
                    st,
                    sp,
                    sat.battery[g + 1],
                    next_b,
                    "battery level does not follow from the step's tasks".into(),
                );
            }
        }
    }
    if upto >= steps && (sat.z - satellite_objective(sat, inst)).abs() > TOL {
        push(
            "obj",
            None,
            None,
            sat.z,
            satellite_objective(sat, inst),
            "stored satellite objective differs from the events".into(),
        );
    }
}
