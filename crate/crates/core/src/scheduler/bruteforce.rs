//! Exhaustive reference solver for tiny instances.
//!
//! Enumerates every slot path within budget and every per-step task choice (including which
//! target or station), simulating data and battery in floating point straight from the
//! constraint expressions. Shares nothing with the lattice solver beyond the instance types.

use crate::error::{Error, Result};

use super::validate::satellite_objective;
use super::{
    SatelliteSchedule, Schedule, ScheduleInstance, SolverStatus, StepRef, TaskEvent, BUDGET_EPS,
};

/// Largest number of complete assignments the oracle will enumerate.
pub const BRUTEFORCE_CAP: u128 = 1 << 24;

const TOL: f64 = 1e-9;

#[derive(Clone, Copy)]
enum Choice {
    Idle,
    Charge,
    Observe(usize),
    Downlink(usize),
}

fn paths(inst: &ScheduleInstance, k: usize) -> Vec<Vec<usize>> {
    let s_n = inst.horizon.stages;
    let j_n = inst.tensors.dims.slots[k];
    let mut out = Vec::new();
    let mut path = vec![0; s_n];
    loop {
        if inst.costs[k].path_cost(&path) <= inst.costs[k].budget + BUDGET_EPS {
            out.push(path.clone());
        }
        // odometer increment
        let mut i = s_n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            path[i] += 1;
            if path[i] < j_n {
                break;
            }
            path[i] = 0;
        }
    }
}

fn choices(inst: &ScheduleInstance, k: usize, s: usize, t: usize, j: usize) -> Vec<Choice> {
    let d = &inst.tensors.dims;
    let mut out = vec![Choice::Idle];
    if inst.tensors.sun(s, k, t, j) {
        out.push(Choice::Charge);
    }
    out.extend(
        (0..d.n_priority)
            .filter(|&p| inst.tensors.priority(s, k, t, j, p))
            .map(Choice::Observe),
    );
    out.extend(
        (0..d.n_stations)
            .filter(|&g| inst.tensors.station(s, k, t, j, g))
            .map(Choice::Downlink),
    );
    out
}

fn sightings(inst: &ScheduleInstance, k: usize, path: &[usize]) -> Vec<TaskEvent> {
    let d = &inst.tensors.dims;
    let mut out = Vec::new();
    for (s, &j) in path.iter().enumerate() {
        for t in 0..d.steps_per_stage {
            for p in 0..d.n_aux {
                if inst.tensors.auxiliary(s, k, t, j, p) {
                    out.push(TaskEvent {
                        stage: s,
                        step: t,
                        object: p,
                    });
                }
            }
        }
    }
    out
}

/// Number of complete assignments the oracle would visit.
pub fn bruteforce_space(inst: &ScheduleInstance) -> u128 {
    let h = &inst.horizon;
    let mut total: u128 = 0;
    for k in 0..inst.satellites() {
        for path in paths(inst, k) {
            let mut n: u128 = 1;
            for g in 0..h.steps() {
                let (s, t) = h.split(g);
                n = n.saturating_mul(choices(inst, k, s, t, path[s]).len() as u128);
            }
            total = total.saturating_add(n);
        }
    }
    total
}

struct Walk<'a> {
    inst: &'a ScheduleInstance,
    k: usize,
    path: &'a [usize],
    picks: Vec<Choice>,
    best: Option<(f64, Vec<Choice>)>,
}

impl Walk<'_> {
    fn go(&mut self, g: usize, d: f64, b: f64, reward: f64) {
        let inst = self.inst;
        let h = &inst.horizon;
        let r = &inst.resources;
        if g == h.steps() {
            if self.best.as_ref().is_none_or(|(z, _)| reward > *z) {
                self.best = Some((reward, self.picks.clone()));
            }
            return;
        }
        let (s, t) = h.split(g);
        let recon = if h.precedes_maneuver(g) {
            r.b_recon
        } else {
            0.0
        };
        for choice in choices(inst, self.k, s, t, self.path[s]) {
            let (obs, down, charge) = match choice {
                Choice::Idle => (0.0, 0.0, 0.0),
                Choice::Charge => (0.0, 0.0, 1.0),
                Choice::Observe(_) => (1.0, 0.0, 0.0),
                Choice::Downlink(_) => (0.0, 1.0, 0.0),
            };
            let ok = d + r.d_obs * obs <= r.d_max + TOL
                && d - r.d_comm * down >= r.d_min - TOL
                && b + r.b_charge * charge <= r.b_max + TOL
                && b - r.b_obs * obs - r.b_comm * down - recon - r.b_time >= r.b_min - TOL;
            if !ok {
                continue;
            }
            let nd = d + r.d_obs * obs - r.d_comm * down;
            let nb = b + r.b_charge * charge - r.b_obs * obs - r.b_comm * down - recon - r.b_time;
            self.picks.push(choice);
            self.go(g + 1, nd, nb, reward + obs + inst.downlink_weight * down);
            self.picks.pop();
        }
    }
}

fn solve_satellite(inst: &ScheduleInstance, k: usize) -> SatelliteSchedule {
    let h = &inst.horizon;
    let r = &inst.resources;
    let st = inst.start[k];
    let d0 = st.data;
    let b0 = st.battery - r.b_recon;
    let stages = h.stages;
    if !(d0 >= r.d_min - TOL && d0 <= r.d_max + TOL && b0 >= r.b_min - TOL && b0 <= r.b_max + TOL) {
        return SatelliteSchedule::infeasible(stages);
    }
    let mut best: Option<(f64, Vec<usize>, Vec<Choice>)> = None;
    for path in paths(inst, k) {
        let mut walk = Walk {
            inst,
            k,
            path: &path,
            picks: Vec::with_capacity(h.steps()),
            best: None,
        };
        walk.go(0, d0, b0, 0.0);
        let Some((reward, picks)) = walk.best else {
            continue;
        };
        let alpha: f64 = sightings(inst, k, &path)
            .iter()
            .map(|e| inst.aux_weights[e.object])
            .sum();
        let z = reward + alpha;
        if best.as_ref().is_none_or(|(bz, _, _)| z > *bz) {
            best = Some((z, path, picks));
        }
    }
    let Some((_, path, picks)) = best else {
        return SatelliteSchedule::infeasible(stages);
    };
    let mut out = SatelliteSchedule::infeasible(stages);
    out.status = SolverStatus::Optimal;
    let (mut d, mut b) = (d0, b0);
    for (g, choice) in picks.into_iter().enumerate() {
        let (s, t) = h.split(g);
        out.data.push(d);
        out.battery.push(b);
        let recon = if h.precedes_maneuver(g) {
            r.b_recon
        } else {
            0.0
        };
        b -= r.b_time + recon;
        match choice {
            Choice::Idle => {}
            Choice::Charge => {
                out.charges.push(StepRef { stage: s, step: t });
                b += r.b_charge;
            }
            Choice::Observe(p) => {
                out.observations.push(TaskEvent {
                    stage: s,
                    step: t,
                    object: p,
                });
                d += r.d_obs;
                b -= r.b_obs;
            }
            Choice::Downlink(q) => {
                out.downlinks.push(TaskEvent {
                    stage: s,
                    step: t,
                    object: q,
                });
                d -= r.d_comm;
                b -= r.b_comm;
            }
        }
    }
    out.aux_visibility = sightings(inst, k, &path);
    out.maneuver_cost = inst.costs[k].path_cost(&path);
    out.slots = path;
    out.z = satellite_objective(&out, inst);
    out
}

/// Exhaustive optimum; refuses instances with more than [`BRUTEFORCE_CAP`] assignments.
pub fn solve_bruteforce(inst: &ScheduleInstance) -> Result<Schedule> {
    inst.validate()?;
    let size = bruteforce_space(inst);
    if size > BRUTEFORCE_CAP {
        return Err(Error::SearchSpaceTooLarge {
            size,
            cap: BRUTEFORCE_CAP,
        });
    }
    Ok(Schedule::from_satellites(
        (0..inst.satellites())
            .map(|k| solve_satellite(inst, k))
            .collect(),
    ))
}
