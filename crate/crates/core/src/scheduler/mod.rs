//! Task and maneuver scheduling over one Block.
//!
//! The formulation has no constraint that couples two satellites and its objective is a sum over
//! satellites, so every solver here works one satellite at a time and concatenates the results.
//! For one satellite, [`solve_exact`] runs a depth-first branch-and-bound over slot paths (one slot
//! per stage). Each tree node carries the best reward for every reachable (data, battery) level
//! on an integer lattice, so a child only has to run its own stage. The winning path is then
//! replayed backwards to recover a concrete task assignment.
//!
//! Indices are 0-based throughout: stage `s` in `0..S`, step `t` in `0..T_s`, and the global step
//! `s * T_s + t`. Slot 0 of every grid is the satellite's current orbit.

mod bruteforce;
mod exact;
mod lattice;
mod random;
mod reschedule;
mod validate;

pub use bruteforce::{bruteforce_space, solve_bruteforce, BRUTEFORCE_CAP};
pub use exact::solve_exact;
pub use lattice::Lattice;
pub use random::{random_instance, RandomSpec};
pub use reschedule::reschedule_remainder;
pub use validate::{objective, validate_schedule, Violation};

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbit::ManeuverCostMatrix;
use crate::par::Execution;
use crate::visibility::VisibilityTensors;

/// Slack allowed when comparing a path's maneuver cost with the budget, km/s.
pub const BUDGET_EPS: f64 = 1e-9;
/// Objective values closer than this are treated as ties.
pub const OBJECTIVE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleHorizon {
    /// Step length, s.
    pub step: f64,
    pub stages: usize,
    pub steps_per_stage: usize,
}

impl ScheduleHorizon {
    pub fn new(step: f64, stages: usize, steps_per_stage: usize) -> Result<Self> {
        let h = ScheduleHorizon {
            step,
            stages,
            steps_per_stage,
        };
        h.validate()?;
        Ok(h)
    }

    /// Splits `duration` seconds into `stages` equal stages of `step`-second steps.
    pub fn from_duration(duration: f64, step: f64, stages: usize) -> Result<Self> {
        if !(step > 0.0) || stages == 0 {
            return Err(Error::invalid(format!(
                "need step > 0 and at least one stage (step {step}, stages {stages})"
            )));
        }
        let steps = duration / step;
        if (steps - steps.round()).abs() > 1e-9 || steps.round() < 1.0 {
            return Err(Error::invalid(format!(
                "duration {duration} s is not a whole number of {step} s steps"
            )));
        }
        let steps = steps.round() as usize;
        if steps % stages != 0 {
            return Err(Error::invalid(format!(
                "{steps} steps do not split into {stages} equal stages"
            )));
        }
        Self::new(step, stages, steps / stages)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) {
            return Err(Error::invalid(format!(
                "step length {} must be positive",
                self.step
            )));
        }
        if self.stages == 0 || self.steps_per_stage == 0 {
            return Err(Error::invalid(
                "horizon needs at least one stage of at least one step",
            ));
        }
        Ok(())
    }

    /// T
    pub fn steps(&self) -> usize {
        self.stages * self.steps_per_stage
    }

    /// T_r, s
    pub fn duration(&self) -> f64 {
        self.steps() as f64 * self.step
    }

    pub fn split(&self, global: usize) -> (usize, usize) {
        (global / self.steps_per_stage, global % self.steps_per_stage)
    }

    /// Whether the step is the last of a stage that is followed by another stage.
    pub fn precedes_maneuver(&self, global: usize) -> bool {
        let (s, t) = self.split(global);
        t + 1 == self.steps_per_stage && s + 1 < self.stages
    }
}

/// Data (MB) and battery (kJ) bookkeeping constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResourceParams {
    pub d_obs: f64,
    pub d_comm: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub b_charge: f64,
    pub b_obs: f64,
    pub b_comm: f64,
    pub b_recon: f64,
    pub b_time: f64,
    pub b_min: f64,
    pub b_max: f64,
}

impl Default for ResourceParams {
    fn default() -> Self {
        ResourceParams {
            d_obs: 100.0,
            d_comm: 50.0,
            d_min: 0.0,
            d_max: 1500.0,
            b_charge: 4.0,
            b_obs: 3.0,
            b_comm: 3.0,
            b_recon: 20.0,
            b_time: 2.0,
            b_min: 0.0,
            b_max: 100.0,
        }
    }
}

impl ResourceParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("d_obs", self.d_obs),
            ("d_comm", self.d_comm),
            ("d_min", self.d_min),
            ("d_max", self.d_max),
            ("b_charge", self.b_charge),
            ("b_obs", self.b_obs),
            ("b_comm", self.b_comm),
            ("b_recon", self.b_recon),
            ("b_time", self.b_time),
            ("b_min", self.b_min),
            ("b_max", self.b_max),
        ];
        for (name, v) in all {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "resource parameter {name} = {v} must be finite and non-negative"
                )));
            }
        }
        if self.d_min > self.d_max || self.b_min > self.b_max {
            return Err(Error::invalid("resource minimums exceed maximums"));
        }
        Ok(())
    }
}

/// Carried-in state of one satellite at the start of the Block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatelliteStart {
    /// MB
    pub data: f64,
    /// kJ
    pub battery: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Maneuvering formulation with auxiliary targets.
    Reossp,
    /// Fixed-orbit baseline: zero budget and no auxiliary targets.
    Eossp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleInstance {
    pub horizon: ScheduleHorizon,
    /// One per satellite; the matrix's `budget` is the satellite's c_max.
    pub costs: Vec<ManeuverCostMatrix>,
    pub tensors: VisibilityTensors,
    pub resources: ResourceParams,
    /// C
    pub downlink_weight: f64,
    /// O_p, one per auxiliary target.
    pub aux_weights: Vec<f64>,
    pub start: Vec<SatelliteStart>,
    pub variant: Variant,
}

/// Component parts of an instance before cross-checking.
#[derive(Debug, Clone)]
pub struct InstanceParts {
    pub horizon: ScheduleHorizon,
    pub costs: Vec<ManeuverCostMatrix>,
    pub tensors: VisibilityTensors,
    pub resources: ResourceParams,
    pub downlink_weight: f64,
    pub aux_weights: Vec<f64>,
    pub start: Vec<SatelliteStart>,
}

/// Assembles an instance and checks that every extent agrees. The EOSSP variant zeroes every
/// budget and drops the auxiliary targets.
pub fn build_instance(parts: InstanceParts, variant: Variant) -> Result<ScheduleInstance> {
    let mut inst = ScheduleInstance {
        horizon: parts.horizon,
        costs: parts.costs,
        tensors: parts.tensors,
        resources: parts.resources,
        downlink_weight: parts.downlink_weight,
        aux_weights: parts.aux_weights,
        start: parts.start,
        variant,
    };
    if variant == Variant::Eossp {
        inst.costs.iter_mut().for_each(|c| c.budget = 0.0);
        inst.drop_auxiliary();
    }
    inst.validate()?;
    Ok(inst)
}

impl ScheduleInstance {
    pub fn satellites(&self) -> usize {
        self.costs.len()
    }

    fn drop_auxiliary(&mut self) {
        self.aux_weights.clear();
        let mut dims = self.tensors.dims.clone();
        dims.n_aux = 0;
        let mut t = VisibilityTensors::zeros(dims);
        t.v = std::mem::take(&mut self.tensors.v);
        t.w = std::mem::take(&mut self.tensors.w);
        t.h = std::mem::take(&mut self.tensors.h);
        self.tensors = t;
    }

    pub fn validate(&self) -> Result<()> {
        self.horizon.validate()?;
        self.resources.validate()?;
        let k = self.satellites();
        if k == 0 {
            return Err(Error::invalid("instance has no satellites"));
        }
        let d = &self.tensors.dims;
        let mismatch = |what: String| Err(Error::ExtentMismatch(what));
        if d.satellites != k {
            return mismatch(format!(
                "tensors cover {} satellites, cost matrices {k}",
                d.satellites
            ));
        }
        if d.stages != self.horizon.stages || d.steps_per_stage != self.horizon.steps_per_stage {
            return mismatch(format!(
                "tensors are {} stages of {} steps, horizon {} of {}",
                d.stages, d.steps_per_stage, self.horizon.stages, self.horizon.steps_per_stage
            ));
        }
        if d.n_aux != self.aux_weights.len() {
            return mismatch(format!(
                "{} auxiliary weights for {} auxiliary targets",
                self.aux_weights.len(),
                d.n_aux
            ));
        }
        if self.start.len() != k {
            return mismatch(format!(
                "{} initial states for {k} satellites",
                self.start.len()
            ));
        }
        self.tensors.check()?;
        for (i, c) in self.costs.iter().enumerate() {
            if c.n_stages() != self.horizon.stages {
                return mismatch(format!(
                    "satellite {i} cost matrix has {} stages",
                    c.n_stages()
                ));
            }
            for (s, table) in c.stages.iter().enumerate() {
                let rows = if s == 0 { 1 } else { d.slots[i] };
                if table.rows != rows || table.cols != d.slots[i] {
                    return mismatch(format!(
                        "satellite {i} stage {s} cost table is {}x{}, expected {rows}x{}",
                        table.rows, table.cols, d.slots[i]
                    ));
                }
                if table.data.iter().any(|&v| !(v >= 0.0)) {
                    return Err(Error::invalid(format!(
                        "satellite {i} stage {s} has a negative or NaN maneuver cost"
                    )));
                }
            }
            if !(c.budget >= 0.0) {
                return Err(Error::invalid(format!(
                    "satellite {i} budget {} must be non-negative",
                    c.budget
                )));
            }
            if d.slots[i] == 0 {
                return mismatch(format!("satellite {i} has no slots"));
            }
        }
        if !(self.downlink_weight > 1.0) || !self.downlink_weight.is_finite() {
            return Err(Error::invalid(format!(
                "downlink weight {} must exceed 1",
                self.downlink_weight
            )));
        }
        if let Some(o) = self.aux_weights.iter().find(|o| !(**o >= 0.0 && **o < 1.0)) {
            return Err(Error::invalid(format!(
                "auxiliary weight {o} outside [0, 1)"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEvent {
    pub stage: usize,
    pub step: usize,
    /// Target, station or auxiliary-target index, depending on the list holding the event.
    pub object: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRef {
    pub stage: usize,
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    FeasibleTimeout,
    Infeasible,
}

impl SolverStatus {
    fn worst(self, other: Self) -> Self {
        use SolverStatus::*;
        match (self, other) {
            (Infeasible, _) | (_, Infeasible) => Infeasible,
            (FeasibleTimeout, _) | (_, FeasibleTimeout) => FeasibleTimeout,
            _ => Optimal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatelliteSchedule {
    /// Slot occupied in each stage (x).
    pub slots: Vec<usize>,
    /// y
    pub observations: Vec<TaskEvent>,
    /// q
    pub downlinks: Vec<TaskEvent>,
    /// h
    pub charges: Vec<StepRef>,
    /// alpha
    pub aux_visibility: Vec<TaskEvent>,
    /// Data level at the start of every global step, MB.
    pub data: Vec<f64>,
    /// Battery level at the start of every global step, kJ.
    pub battery: Vec<f64>,
    /// km/s
    pub maneuver_cost: f64,
    pub z: f64,
    pub status: SolverStatus,
}

impl SatelliteSchedule {
    /// Placeholder for a satellite with no feasible schedule.
    pub fn infeasible(stages: usize) -> Self {
        SatelliteSchedule {
            slots: vec![0; stages],
            observations: Vec::new(),
            downlinks: Vec::new(),
            charges: Vec::new(),
            aux_visibility: Vec::new(),
            data: Vec::new(),
            battery: Vec::new(),
            maneuver_cost: 0.0,
            z: 0.0,
            status: SolverStatus::Infeasible,
        }
    }

    /// Data and battery after the final step, given the Block's resources.
    pub fn final_levels(&self, h: &ScheduleHorizon, r: &ResourceParams) -> Option<(f64, f64)> {
        let last = h.steps().checked_sub(1)?;
        let (d, b) = (*self.data.get(last)?, *self.battery.get(last)?);
        let (s, t) = h.split(last);
        let at = |e: &TaskEvent| e.stage == s && e.step == t;
        let obs = self.observations.iter().filter(|e| at(e)).count() as f64;
        let down = self.downlinks.iter().filter(|e| at(e)).count() as f64;
        let ch = self
            .charges
            .iter()
            .filter(|e| e.stage == s && e.step == t)
            .count() as f64;
        Some((
            d + r.d_obs * obs - r.d_comm * down,
            b + r.b_charge * ch - r.b_obs * obs - r.b_comm * down - r.b_time,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub satellites: Vec<SatelliteSchedule>,
    pub z: f64,
    pub status: SolverStatus,
}

impl Schedule {
    pub fn from_satellites(satellites: Vec<SatelliteSchedule>) -> Self {
        let z = satellites.iter().map(|s| s.z).sum();
        let status = satellites
            .iter()
            .fold(SolverStatus::Optimal, |acc, s| acc.worst(s.status));
        Schedule {
            satellites,
            z,
            status,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    /// Wall-clock cap per solve; the best schedule found so far is returned on expiry.
    pub time_limit: Option<Duration>,
    /// Largest (data, battery) lattice the solver will allocate.
    pub state_cap: usize,
    pub execution: Execution,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            time_limit: None,
            state_cap: 1 << 22,
            execution: Execution::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn week_long_horizon() {
        let h = ScheduleHorizon::from_duration(3.5 * 86_400.0, 100.0, 4).unwrap();
        assert_eq!((h.steps(), h.steps_per_stage), (3024, 756));
        assert!(ScheduleHorizon::from_duration(3.5 * 86_400.0, 100.0, 5).is_err());
        assert!(ScheduleHorizon::from_duration(150.0, 100.0, 1).is_err());
        assert!(
            h.precedes_maneuver(755) && !h.precedes_maneuver(3023) && !h.precedes_maneuver(754)
        );
    }

    #[test]
    fn empty_constellation_is_rejected() {
        let inst = random_instance(1, &RandomSpec::default()).unwrap();
        let parts = InstanceParts {
            horizon: inst.horizon,
            costs: vec![],
            tensors: VisibilityTensors::zeros(crate::visibility::TensorDims {
                satellites: 0,
                slots: vec![],
                ..inst.tensors.dims.clone()
            }),
            resources: inst.resources,
            downlink_weight: 5.0,
            aux_weights: inst.aux_weights.clone(),
            start: vec![],
        };
        assert!(build_instance(parts, Variant::Reossp).is_err());
    }

    #[test]
    fn eossp_build_zeroes_budget_and_aux() {
        let inst = random_instance(4, &RandomSpec::default()).unwrap();
        let parts = InstanceParts {
            horizon: inst.horizon,
            costs: inst.costs.clone(),
            tensors: inst.tensors.clone(),
            resources: inst.resources,
            downlink_weight: inst.downlink_weight,
            aux_weights: inst.aux_weights.clone(),
            start: inst.start.clone(),
        };
        let e = build_instance(parts, Variant::Eossp).unwrap();
        assert!(e.costs.iter().all(|c| c.budget == 0.0));
        assert_eq!(e.tensors.dims.n_aux, 0);
        assert!(e.aux_weights.is_empty());
        assert_eq!(e.tensors.v, inst.tensors.v);
    }
}
