//! Re-solving the unexecuted tail of a Block after the priority set grows.

use crate::error::{Error, Result};

use super::exact::{aux_events, SatModel};
use super::lattice::Lattice;
use super::validate::{check, satellite_objective};
use super::{SatelliteStart, Schedule, ScheduleInstance, SolveOptions, SolverStatus};

/// Keeps every event before global step `t_now` and the committed slot path, then re-optimizes
/// the remaining tasks against `inst` (typically the Block's instance with more priority
/// targets appended) starting from the trajectory's levels at `t_now`.
pub fn reschedule_remainder(
    schedule: &Schedule,
    inst: &ScheduleInstance,
    t_now: usize,
    opts: &SolveOptions,
) -> Result<Schedule> {
    inst.validate()?;
    let steps = inst.horizon.steps();
    if t_now > steps {
        return Err(Error::invalid(format!(
            "reschedule step {t_now} is past the horizon of {steps} steps"
        )));
    }
    if t_now == steps {
        return Ok(schedule.clone());
    }
    let problems = check(schedule, inst, t_now);
    if !problems.is_empty() {
        let details = problems
            .iter()
            .map(|v| {
                format!(
                    "{} (satellite {}): {}",
                    v.constraint, v.satellite, v.message
                )
            })
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::InvalidExecutedPrefix { t_now, details });
    }
    let mut anchors: Vec<SatelliteStart> = inst.start.clone();
    for sat in &schedule.satellites {
        if sat.status != SolverStatus::Infeasible {
            anchors.push(SatelliteStart {
                data: sat.data[t_now],
                battery: sat.battery[t_now],
            });
        }
    }
    let lat = Lattice::new(&inst.resources, &anchors, opts.state_cap)?;
    let sats = opts
        .execution
        .try_map(schedule.satellites.len(), |k| -> Result<_> {
            let sat = &schedule.satellites[k];
            if sat.status == SolverStatus::Infeasible {
                return Ok(sat.clone());
            }
            let model = SatModel::new(inst, k, lat);
            let start = lat
                .locate(sat.data[t_now], sat.battery[t_now])
                .ok_or_else(|| Error::InvalidExecutedPrefix {
                    t_now,
                    details: format!(
                        "satellite {k} levels at the reschedule step are off the resource grid"
                    ),
                })?;
            let start = lat.index(start.0, start.1);
            let mut out = model
                .replay(&sat.slots, t_now, start, sat.clone())
                .ok_or_else(|| Error::InvalidExecutedPrefix {
                    t_now,
                    details: format!("satellite {k} has no feasible continuation"),
                })?;
            let h = &inst.horizon;
            out.aux_visibility
                .retain(|e| e.stage * h.steps_per_stage + e.step < t_now);
            out.aux_visibility
                .extend(aux_events(inst, k, &sat.slots, t_now, steps));
            out.z = satellite_objective(&out, inst);
            Ok(out)
        })?;
    Ok(Schedule::from_satellites(sats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::{
        random_instance, solve_exact, validate_schedule, RandomSpec, TaskEvent,
    };
    use crate::visibility::{BitTensor, VisibilityTensors};

    fn setup(seed: u64) -> (ScheduleInstance, Schedule) {
        let inst = random_instance(seed, &RandomSpec::default()).unwrap();
        let s = solve_exact(&inst, &SolveOptions::default()).unwrap();
        (inst, s)
    }

    /// Same instance with one more priority target, visible only where `vis` says.
    fn with_new_target(
        inst: &ScheduleInstance,
        vis: impl Fn(usize, usize, usize, usize) -> bool,
    ) -> ScheduleInstance {
        let mut dims = inst.tensors.dims.clone();
        dims.n_priority += 1;
        let mut t = VisibilityTensors::zeros(dims.clone());
        t.u = inst.tensors.u.clone();
        t.w = inst.tensors.w.clone();
        t.h = inst.tensors.h.clone();
        for s in 0..dims.stages {
            for k in 0..dims.satellites {
                let i = s * dims.satellites + k;
                let mut v =
                    BitTensor::zeros(&[dims.steps_per_stage, dims.slots[k], dims.n_priority]);
                for step in 0..dims.steps_per_stage {
                    for j in 0..dims.slots[k] {
                        for p in 0..dims.n_priority - 1 {
                            v.set(&[step, j, p], inst.tensors.v[i].get(&[step, j, p]));
                        }
                        v.set(&[step, j, dims.n_priority - 1], vis(s, k, step, j));
                    }
                }
                t.v[i] = v;
            }
        }
        ScheduleInstance {
            tensors: t,
            ..inst.clone()
        }
    }

    #[test]
    fn unchanged_instance_gives_identical_schedule() {
        for seed in 0..10 {
            let (inst, s) = setup(seed);
            for t_now in 0..=inst.horizon.steps() {
                let r = reschedule_remainder(&s, &inst, t_now, &SolveOptions::default()).unwrap();
                assert_eq!(r, s, "seed {seed} t_now {t_now}");
            }
        }
    }

    #[test]
    fn new_target_after_t_now_is_observed() {
        // blank sunlit instance: only the new target offers reward
        let mut inst = random_instance(7, &RandomSpec::default()).unwrap();
        crate::scheduler::random::blank_sunlit(&mut inst);
        inst.aux_weights.iter_mut().for_each(|o| *o = 0.0);
        inst.start.iter_mut().for_each(|s| {
            s.data = 0.0;
            s.battery = inst.resources.b_max;
        });
        let s = solve_exact(&inst, &SolveOptions::default()).unwrap();
        assert_eq!(s.z, 0.0);
        let slot = s.satellites[0].slots[1];
        let late = with_new_target(&inst, |st, k, step, j| {
            st == 1 && k == 0 && step == 0 && j == slot
        });
        let t_now = inst.horizon.steps_per_stage;
        let r = reschedule_remainder(&s, &late, t_now, &SolveOptions::default()).unwrap();
        let new_p = late.tensors.dims.n_priority - 1;
        assert!(r.satellites[0].observations.contains(&TaskEvent {
            stage: 1,
            step: 0,
            object: new_p
        }));
        assert!(
            validate_schedule(&r, &late).is_empty(),
            "{:?}",
            validate_schedule(&r, &late)
        );
        // prefix preserved verbatim
        assert_eq!(
            &r.satellites[0].data[..t_now],
            &s.satellites[0].data[..t_now]
        );
    }

    #[test]
    fn corrupted_prefix_is_rejected() {
        let (inst, mut s) = setup(3);
        s.satellites[0].battery[1] += 1.0;
        assert!(matches!(
            reschedule_remainder(&s, &inst, 2, &SolveOptions::default()),
            Err(Error::InvalidExecutedPrefix { .. })
        ));
        assert!(reschedule_remainder(
            &s,
            &inst,
            inst.horizon.steps() + 1,
            &SolveOptions::default()
        )
        .is_err());
    }
}
