//! Small random instances for cross-checking solvers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::orbit::{CostTable, ManeuverCostMatrix};
use crate::visibility::{TensorDims, VisibilityTensors};

use super::{
    build_instance, InstanceParts, ResourceParams, SatelliteStart, ScheduleHorizon,
    ScheduleInstance, Variant,
};

/// Shape of a random instance. Counts are exact; `visibility` and `sun` are per-entry
/// probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSpec {
    pub satellites: usize,
    pub stages: usize,
    pub slots: usize,
    pub steps_per_stage: usize,
    pub priority: usize,
    pub aux: usize,
    pub stations: usize,
    pub visibility: f64,
    pub sun: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            satellites: 2,
            stages: 2,
            slots: 3,
            steps_per_stage: 4,
            priority: 2,
            aux: 1,
            stations: 1,
            visibility: 0.4,
            sun: 0.6,
        }
    }
}

/// Random instance with dyadic costs and weights, so objective values compare exactly.
pub fn random_instance(seed: u64, spec: &RandomSpec) -> Result<ScheduleInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = ScheduleHorizon::new(100.0, spec.stages, spec.steps_per_stage)?;
    let dims = TensorDims {
        stages: spec.stages,
        satellites: spec.satellites,
        steps_per_stage: spec.steps_per_stage,
        slots: vec![spec.slots; spec.satellites],
        n_priority: spec.priority,
        n_aux: spec.aux,
        n_stations: spec.stations,
    };
    let mut t = VisibilityTensors::zeros(dims);
    for s in 0..spec.stages {
        for k in 0..spec.satellites {
            for step in 0..spec.steps_per_stage {
                for j in 0..spec.slots {
                    for p in 0..spec.priority {
                        t.set_priority(s, k, step, j, p, rng.gen_bool(spec.visibility));
                    }
                    for p in 0..spec.aux {
                        t.set_auxiliary(s, k, step, j, p, rng.gen_bool(spec.visibility));
                    }
                    for g in 0..spec.stations {
                        t.set_station(s, k, step, j, g, rng.gen_bool(spec.visibility));
                    }
                    t.set_sun(s, k, step, j, rng.gen_bool(spec.sun));
                }
            }
        }
    }
    let dyadic = |rng: &mut ChaCha8Rng| rng.gen_range(1..=8) as f64 / 8.0;
    let budgets = [0.0, 0.5, 1.0, 2.0];
    let costs = (0..spec.satellites)
        .map(|_| {
            let j = spec.slots;
            let first: Vec<f64> = (0..j)
                .map(|i| if i == 0 { 0.0 } else { dyadic(&mut rng) })
                .collect();
            let mut stages = vec![CostTable::new(1, j, first)?];
            for _ in 1..spec.stages {
                let data = (0..j * j)
                    .map(|i| {
                        if i / j == i % j {
                            0.0
                        } else {
                            dyadic(&mut rng)
                        }
                    })
                    .collect();
                stages.push(CostTable::new(j, j, data)?);
            }
            Ok(ManeuverCostMatrix {
                stages,
                budget: budgets[rng.gen_range(0..budgets.len())],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let resources = ResourceParams {
        d_obs: 100.0,
        d_comm: 50.0,
        d_min: 0.0,
        d_max: if rng.gen_bool(0.5) { 200.0 } else { 300.0 },
        b_charge: 4.0,
        b_obs: 3.0,
        b_comm: 3.0,
        b_recon: 5.0,
        b_time: 1.0,
        b_min: 0.0,
        b_max: 20.0,
    };
    let start = (0..spec.satellites)
        .map(|_| SatelliteStart {
            data: 50.0 * rng.gen_range(0..=4) as f64,
            battery: rng.gen_range(10..=20) as f64,
        })
        .collect();
    let aux_weights = (0..spec.aux)
        .map(|_| rng.gen_range(0..16) as f64 / 16.0)
        .collect();
    build_instance(
        InstanceParts {
            horizon,
            costs,
            tensors: t,
            resources,
            downlink_weight: 5.0,
            aux_weights,
            start,
        },
        Variant::Reossp,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::{bruteforce_space, BRUTEFORCE_CAP};

    #[test]
    fn deterministic_and_valid() {
        let a = random_instance(9, &RandomSpec::default()).unwrap();
        assert_eq!(a, random_instance(9, &RandomSpec::default()).unwrap());
        assert_ne!(
            a.tensors,
            random_instance(10, &RandomSpec::default()).unwrap().tensors
        );
        a.validate().unwrap();
    }

    #[test]
    fn default_fits_the_oracle() {
        for seed in 0..20 {
            let inst = random_instance(seed, &RandomSpec::default()).unwrap();
            assert!(bruteforce_space(&inst) <= BRUTEFORCE_CAP);
        }
    }
}

/// Clears every visibility bit and lights every step, leaving a feasible blank instance.
#[cfg(test)]
pub(crate) fn blank_sunlit(inst: &mut ScheduleInstance) {
    let d = inst.tensors.dims.clone();
    inst.tensors = VisibilityTensors::zeros(d.clone());
    for s in 0..d.stages {
        for k in 0..d.satellites {
            for t in 0..d.steps_per_stage {
                for j in 0..d.slots[k] {
                    inst.tensors.set_sun(s, k, t, j, true);
                }
            }
        }
    }
}
