//! Exact per-satellite solver: branch-and-bound over slot paths with a lattice DP at each node.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::Instant;

use log::warn;

use crate::error::Result;

use super::lattice::Lattice;
use super::validate::satellite_objective;
use super::{
    SatelliteSchedule, Schedule, ScheduleInstance, SolveOptions, SolverStatus, StepRef, TaskEvent,
    BUDGET_EPS, OBJECTIVE_EPS,
};

/// What a satellite in a given slot can do during one step.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct StepInfo {
    /// Lowest-index visible priority target.
    pub obs: Option<usize>,
    /// Lowest-index visible ground station.
    pub down: Option<usize>,
    pub sun: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Action {
    Observe(usize),
    Downlink(usize),
    Charge,
    Idle,
}

/// Calls `f(action, next_d, next_b, reward)` for every feasible action, in preference order.
#[inline]
pub(crate) fn for_each_action(
    lat: &Lattice,
    info: &StepInfo,
    recon: usize,
    d: usize,
    b: usize,
    c: f64,
    mut f: impl FnMut(Action, usize, usize, f64),
) {
    let upkeep = lat.b_time + recon;
    if b < upkeep {
        return;
    }
    if let Some(p) = info.obs {
        if d + lat.d_obs < lat.nd && b >= upkeep + lat.b_obs {
            f(
                Action::Observe(p),
                d + lat.d_obs,
                b - upkeep - lat.b_obs,
                1.0,
            );
        }
    }
    if let Some(g) = info.down {
        if d >= lat.d_comm && b >= upkeep + lat.b_comm {
            f(
                Action::Downlink(g),
                d - lat.d_comm,
                b - upkeep - lat.b_comm,
                c,
            );
        }
    }
    if info.sun && b + lat.b_charge < lat.nb {
        f(Action::Charge, d, b + lat.b_charge - upkeep, 0.0);
    }
    f(Action::Idle, d, b - upkeep, 0.0);
}

/// Per-satellite view of an instance.
pub(crate) struct SatModel<'a> {
    pub inst: &'a ScheduleInstance,
    pub k: usize,
    pub lat: Lattice,
    /// [stage][slot][step]
    pub info: Vec<Vec<Vec<StepInfo>>>,
    /// Auxiliary reward of sitting in a slot for a whole stage. [stage][slot]
    pub alpha: Vec<Vec<f64>>,
    /// Relaxed best reward of a stage in a slot, resources ignored. [stage][slot]
    pub ub: Vec<Vec<f64>>,
    /// Sum over later stages of the best relaxed stage reward. [stage]
    pub rest_ub: Vec<f64>,
}

impl<'a> SatModel<'a> {
    pub fn new(inst: &'a ScheduleInstance, k: usize, lat: Lattice) -> Self {
        let tens = &inst.tensors;
        let d = &tens.dims;
        let (stages, ts, j_n) = (d.stages, d.steps_per_stage, d.slots[k]);
        let c = inst.downlink_weight;
        let mut info = vec![vec![vec![StepInfo::default(); ts]; j_n]; stages];
        let mut alpha = vec![vec![0.0; j_n]; stages];
        let mut ub = vec![vec![0.0; j_n]; stages];
        for s in 0..stages {
            for j in 0..j_n {
                for t in 0..ts {
                    let obs = (0..d.n_priority).find(|&p| tens.priority(s, k, t, j, p));
                    let down = (0..d.n_stations).find(|&g| tens.station(s, k, t, j, g));
                    let sun = tens.sun(s, k, t, j);
                    info[s][j][t] = StepInfo { obs, down, sun };
                    ub[s][j] += match (obs, down) {
                        (_, Some(_)) => c,
                        (Some(_), None) => 1.0,
                        _ => 0.0,
                    };
                }
                alpha[s][j] = stage_alpha(inst, k, s, j);
                ub[s][j] += alpha[s][j];
            }
        }
        let mut rest_ub = vec![0.0; stages];
        for s in (0..stages.saturating_sub(1)).rev() {
            let best_next = ub[s + 1].iter().copied().fold(0.0, f64::max);
            rest_ub[s] = rest_ub[s + 1] + best_next;
        }
        SatModel {
            inst,
            k,
            lat,
            info,
            alpha,
            ub,
            rest_ub,
        }
    }

    pub fn recon_at(&self, s: usize, t: usize) -> usize {
        let h = &self.inst.horizon;
        if t + 1 == h.steps_per_stage && s + 1 < h.stages {
            self.lat.b_recon
        } else {
            0
        }
    }

    /// Lattice coordinates at the first step: carried-in data, battery less the first maneuver.
    pub fn initial_state(&self) -> Option<(usize, usize)> {
        let st = &self.inst.start[self.k];
        self.lat
            .locate(st.data, st.battery - self.inst.resources.b_recon)
    }

    /// Pushes a best-reward table through one stage spent in slot `j`.
    pub fn run_stage(&self, s: usize, j: usize, input: &[f64], scratch: &mut Vec<f64>) -> Vec<f64> {
        let lat = &self.lat;
        let c = self.inst.downlink_weight;
        let mut cur = input.to_vec();
        scratch.resize(cur.len(), f64::NEG_INFINITY);
        for (t, info) in self.info[s][j].iter().enumerate() {
            let rc = self.recon_at(s, t);
            scratch.fill(f64::NEG_INFINITY);
            for (i, &v) in cur.iter().enumerate() {
                if v == f64::NEG_INFINITY {
                    continue;
                }
                let (d, b) = lat.unpack(i);
                for_each_action(lat, info, rc, d, b, c, |_, nd, nb, r| {
                    let slot = &mut scratch[lat.index(nd, nb)];
                    let cand = v + r;
                    if cand > *slot {
                        *slot = cand;
                    }
                });
            }
            std::mem::swap(&mut cur, scratch);
        }
        cur
    }

    /// Builds the concrete schedule along `path`: backward value-to-go, then a greedy forward
    /// pass that takes the first optimal action in preference order.
    pub fn reconstruct(&self, path: &[usize], status: SolverStatus) -> SatelliteSchedule {
        let Some(init) = self.initial_state() else {
            return SatelliteSchedule::infeasible(path.len());
        };
        let idx = self.lat.index(init.0, init.1);
        let Some(mut out) = self.replay(path, 0, idx, SatelliteSchedule::infeasible(path.len()))
        else {
            return SatelliteSchedule::infeasible(path.len());
        };
        out.status = status;
        out.maneuver_cost = self.inst.costs[self.k].path_cost(path);
        out.aux_visibility = aux_events(self.inst, self.k, path, 0, self.inst.horizon.steps());
        out.z = satellite_objective(&out, self.inst);
        out
    }

    /// Optimal task assignment for global steps `from..T` on a fixed path, starting from lattice
    /// state `start`; events and trajectory entries before `from` are taken from `prefix`.
    pub fn replay(
        &self,
        path: &[usize],
        from: usize,
        start: usize,
        prefix: SatelliteSchedule,
    ) -> Option<SatelliteSchedule> {
        let h = &self.inst.horizon;
        let lat = &self.lat;
        let c = self.inst.downlink_weight;
        let n = lat.states();
        let steps = h.steps();
        let mut value = vec![vec![f64::NEG_INFINITY; n]; steps - from + 1];
        value[steps - from].fill(0.0);
        for g in (from..steps).rev() {
            let (s, t) = h.split(g);
            let info = &self.info[s][path[s]][t];
            let rc = self.recon_at(s, t);
            let (head, tail) = value.split_at_mut(g - from + 1);
            let (now, next) = (&mut head[g - from], &tail[0]);
            for (i, slot) in now.iter_mut().enumerate() {
                let (d, b) = lat.unpack(i);
                for_each_action(lat, info, rc, d, b, c, |_, nd, nb, r| {
                    let cand = r + next[lat.index(nd, nb)];
                    if cand > *slot {
                        *slot = cand;
                    }
                });
            }
        }
        if value[0][start] == f64::NEG_INFINITY {
            return None;
        }
        let mut out = prefix;
        out.slots = path.to_vec();
        out.observations
            .retain(|e| e.stage * h.steps_per_stage + e.step < from);
        out.downlinks
            .retain(|e| e.stage * h.steps_per_stage + e.step < from);
        out.charges
            .retain(|e| e.stage * h.steps_per_stage + e.step < from);
        out.data.truncate(from);
        out.battery.truncate(from);
        let mut cur = start;
        for g in from..steps {
            let (s, t) = h.split(g);
            let info = &self.info[s][path[s]][t];
            let rc = self.recon_at(s, t);
            let (d, b) = lat.unpack(cur);
            out.data.push(lat.data_level(d));
            out.battery.push(lat.battery_level(b));
            let target = value[g - from][cur];
            let next = &value[g - from + 1];
            let mut chosen = None;
            for_each_action(lat, info, rc, d, b, c, |a, nd, nb, r| {
                if chosen.is_none() && r + next[lat.index(nd, nb)] == target {
                    chosen = Some((a, lat.index(nd, nb)));
                }
            });
            let (action, nxt) = chosen.expect("value-to-go is attained by some action");
            match action {
                Action::Observe(p) => out.observations.push(TaskEvent {
                    stage: s,
                    step: t,
                    object: p,
                }),
                Action::Downlink(q) => out.downlinks.push(TaskEvent {
                    stage: s,
                    step: t,
                    object: q,
                }),
                Action::Charge => out.charges.push(StepRef { stage: s, step: t }),
                Action::Idle => {}
            }
            cur = nxt;
        }
        Some(out)
    }
}

fn stage_alpha(inst: &ScheduleInstance, k: usize, s: usize, j: usize) -> f64 {
    let d = &inst.tensors.dims;
    let mut total = 0.0;
    for p in 0..d.n_aux {
        let count = (0..d.steps_per_stage)
            .filter(|&t| inst.tensors.auxiliary(s, k, t, j, p))
            .count();
        total += inst.aux_weights[p] * count as f64;
    }
    total
}

/// Every auxiliary sighting along `path` for global steps in `from..to`.
pub(crate) fn aux_events(
    inst: &ScheduleInstance,
    k: usize,
    path: &[usize],
    from: usize,
    to: usize,
) -> Vec<TaskEvent> {
    let h = &inst.horizon;
    let mut out = Vec::new();
    for g in from..to {
        let (s, t) = h.split(g);
        for p in 0..inst.tensors.dims.n_aux {
            if inst.tensors.auxiliary(s, k, t, path[s], p) {
                out.push(TaskEvent {
                    stage: s,
                    step: t,
                    object: p,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
struct Leaf {
    z: f64,
    cost: f64,
    path: Vec<usize>,
}

impl Leaf {
    /// Higher z, then cheaper, then lexicographically smaller path.
    fn beats(&self, other: &Leaf) -> bool {
        if (self.z - other.z).abs() > OBJECTIVE_EPS {
            return self.z > other.z;
        }
        if (self.cost - other.cost).abs() > 1e-12 {
            return self.cost < other.cost;
        }
        self.path < other.path
    }
}

fn keep_better(best: &mut Option<Leaf>, cand: Leaf) {
    if best.as_ref().is_none_or(|b| cand.beats(b)) {
        *best = Some(cand);
    }
}

struct Search<'m, 'a> {
    model: &'m SatModel<'a>,
    budget: f64,
    incumbent: AtomicU64,
    deadline: Option<Instant>,
    timed_out: AtomicBool,
}

impl Search<'_, '_> {
    fn incumbent(&self) -> f64 {
        f64::from_bits(self.incumbent.load(Ordering::Relaxed))
    }

    fn raise(&self, z: f64) {
        let _ = self
            .incumbent
            .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |cur| {
                (z > f64::from_bits(cur)).then_some(z.to_bits())
            });
    }

    fn out_of_time(&self) -> bool {
        if self.timed_out.load(Ordering::Relaxed) {
            return true;
        }
        if let Some(d) = self.deadline {
            if self.incumbent() > f64::NEG_INFINITY && Instant::now() >= d {
                self.timed_out.store(true, Ordering::Relaxed);
                return true;
            }
        }
        false
    }

    #[allow(clippy::too_many_arguments)]
    fn visit(
        &self,
        s: usize,
        path: &mut Vec<usize>,
        cost: f64,
        alpha: f64,
        table: &[f64],
        scratch: &mut Vec<f64>,
        best: &mut Option<Leaf>,
    ) {
        if self.out_of_time() {
            return;
        }
        let m = self.model;
        let j = path[s];
        let out = m.run_stage(s, j, table, scratch);
        let reward = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if reward == f64::NEG_INFINITY {
            return;
        }
        let alpha = alpha + m.alpha[s][j];
        if reward + alpha + m.rest_ub[s] < self.incumbent() - OBJECTIVE_EPS {
            return;
        }
        let stages = m.inst.horizon.stages;
        if s + 1 == stages {
            let z = reward + alpha;
            self.raise(z);
            keep_better(
                best,
                Leaf {
                    z,
                    cost,
                    path: path.clone(),
                },
            );
            return;
        }
        let costs = &m.inst.costs[m.k];
        for next in child_order(&m.ub[s + 1]) {
            let c = cost + costs.cost(s + 1, j, next);
            if c > self.budget + BUDGET_EPS {
                continue;
            }
            path.push(next);
            self.visit(s + 1, path, c, alpha, &out, scratch, best);
            path.pop();
        }
    }
}

/// Children in descending relaxed reward, ties by index.
fn child_order(ub: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ub.len()).collect();
    order.sort_by(|&a, &b| ub[b].total_cmp(&ub[a]).then(a.cmp(&b)));
    order
}

fn solve_satellite(
    inst: &ScheduleInstance,
    k: usize,
    lat: Lattice,
    opts: &SolveOptions,
    started: Instant,
) -> SatelliteSchedule {
    let model = SatModel::new(inst, k, lat);
    let stages = inst.horizon.stages;
    let Some((d0, b0)) = model.initial_state() else {
        warn!("satellite {k}: carried-in data or battery is outside the resource bounds");
        return SatelliteSchedule::infeasible(stages);
    };
    let mut root = vec![f64::NEG_INFINITY; model.lat.states()];
    root[model.lat.index(d0, b0)] = 0.0;
    let search = Search {
        model: &model,
        budget: inst.costs[k].budget,
        incumbent: AtomicU64::new(f64::NEG_INFINITY.to_bits()),
        deadline: opts.time_limit.map(|d| started + d),
        timed_out: AtomicBool::new(false),
    };
    let first: Vec<usize> = child_order(&model.ub[0])
        .into_iter()
        .filter(|&j| inst.costs[k].cost(0, 0, j) <= search.budget + BUDGET_EPS)
        .collect();
    let subtree_best = opts.execution.map(first.len(), |i| {
        let j = first[i];
        let mut best = None;
        let mut scratch = Vec::new();
        search.visit(
            0,
            &mut vec![j],
            inst.costs[k].cost(0, 0, j),
            0.0,
            &root,
            &mut scratch,
            &mut best,
        );
        best
    });
    let mut best = None;
    for leaf in subtree_best.into_iter().flatten() {
        keep_better(&mut best, leaf);
    }
    let status = if search.timed_out.load(Ordering::Relaxed) {
        warn!("satellite {k}: time limit reached, returning the best schedule found");
        SolverStatus::FeasibleTimeout
    } else {
        SolverStatus::Optimal
    };
    match best {
        Some(leaf) => model.reconstruct(&leaf.path, status),
        None => SatelliteSchedule::infeasible(stages),
    }
}

/// Exact optimum of the instance, solved satellite by satellite.
pub fn solve_exact(inst: &ScheduleInstance, opts: &SolveOptions) -> Result<Schedule> {
    inst.validate()?;
    let lat = Lattice::new(&inst.resources, &inst.start, opts.state_cap)?;
    let started = Instant::now();
    let sats = opts.execution.map(inst.satellites(), |k| {
        solve_satellite(inst, k, lat, opts, started)
    });
    Ok(Schedule::from_satellites(sats))
}
