//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero if any fail.

mod common;

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use firesched::confidence::{bayes_update, TargetRegistry};
use firesched::detect::{
    angular_distance, detect_blobs, early_fuse, early_fuse_weights, geolocate, geolocate_offset,
    iou, late_fuse, match_detections, BoundingBox, Detection, DetectorProfile,
};
use firesched::io::{load_scene_fixture, SceneFixture};
use firesched::mission::{passive_cadence_check, run_mission, MissionConfig};
use firesched::orbit::{
    build_slot_grid, propagate, subpoint, EarthFrame, OrbitalElements, MU_EARTH,
};
use firesched::scene::{
    render, Band, FireTruth, Raster, RenderConfig, Scene, KM_PER_DEG_LAT, KM_PER_DEG_LON,
};
use firesched::scheduler::{
    build_instance, random_instance, solve_bruteforce, solve_exact, validate_schedule,
    InstanceParts, RandomSpec, Schedule, ScheduleInstance, SolveOptions, SolverStatus, TaskEvent,
    Variant,
};
use firesched::time::add_seconds;
use firesched::visibility::{TensorDims, VisibilityTensors};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn tiny_spec(seed: u64) -> RandomSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xacce_97);
    RandomSpec {
        satellites: rng.gen_range(1..=2),
        stages: 2,
        slots: rng.gen_range(1..=3),
        steps_per_stage: rng.gen_range(1..=4),
        priority: rng.gen_range(0..=2),
        aux: rng.gen_range(0..=1),
        stations: 1,
        visibility: 0.4,
        sun: 0.6,
    }
}

fn live(s: &Schedule) -> impl Iterator<Item = (usize, &firesched::scheduler::SatelliteSchedule)> {
    s.satellites
        .iter()
        .enumerate()
        .filter(|(_, x)| x.status != SolverStatus::Infeasible || !x.data.is_empty())
}

/// Solved tiny instances shared by the scheduler criteria.
struct Solved {
    inst: ScheduleInstance,
    exact: Schedule,
    brute: Schedule,
}

fn solve_tiny(n: u64) -> Vec<Solved> {
    (0..n)
        .map(|seed| {
            let inst = random_instance(seed, &tiny_spec(seed)).unwrap();
            let exact = solve_exact(&inst, &SolveOptions::default()).unwrap();
            let brute = solve_bruteforce(&inst).unwrap();
            Solved { inst, exact, brute }
        })
        .collect()
}

fn oracle_equivalence(solved: &[Solved], elapsed: Duration) -> Outcome {
    let agree = solved.iter().filter(|s| s.exact.z == s.brute.z).count();
    let first_bad = solved.iter().position(|s| s.exact.z != s.brute.z);
    check(
        agree == 100 && elapsed < Duration::from_secs(120),
        format!(
            "{agree}/100 exact == brute force in {:.1} s{}",
            elapsed.as_secs_f64(),
            first_bad.map_or(String::new(), |i| format!(", first mismatch seed {i}")),
        ),
    )
}

/// Copies the target, station and sun bits, leaving no auxiliary targets.
fn without_aux(t: &VisibilityTensors) -> VisibilityTensors {
    let d = &t.dims;
    let mut out = VisibilityTensors::zeros(TensorDims {
        n_aux: 0,
        ..d.clone()
    });
    for s in 0..d.stages {
        for k in 0..d.satellites {
            for step in 0..d.steps_per_stage {
                for j in 0..d.slots[k] {
                    for p in 0..d.n_priority {
                        out.set_priority(s, k, step, j, p, t.priority(s, k, step, j, p));
                    }
                    for g in 0..d.n_stations {
                        out.set_station(s, k, step, j, g, t.station(s, k, step, j, g));
                    }
                    out.set_sun(s, k, step, j, t.sun(s, k, step, j));
                }
            }
        }
    }
    out
}

fn parts(inst: &ScheduleInstance) -> InstanceParts {
    InstanceParts {
        horizon: inst.horizon,
        costs: inst.costs.clone(),
        tensors: inst.tensors.clone(),
        resources: inst.resources,
        downlink_weight: inst.downlink_weight,
        aux_weights: inst.aux_weights.clone(),
        start: inst.start.clone(),
    }
}

fn reduction_identity(outputs: &mut Vec<(ScheduleInstance, Schedule)>) -> Outcome {
    let spec = RandomSpec {
        aux: 2,
        ..RandomSpec::default()
    };
    let mut equal = 0;
    let mut detail = String::new();
    for seed in 0..25 {
        let inst = random_instance(1000 + seed, &spec).unwrap();
        // by hand: zero budgets, no auxiliary targets, still the maneuvering formulation
        let mut p = parts(&inst);
        p.costs.iter_mut().for_each(|c| c.budget = 0.0);
        p.tensors = without_aux(&inst.tensors);
        p.aux_weights.clear();
        let manual = build_instance(p, Variant::Reossp).unwrap();
        let baseline = build_instance(parts(&inst), Variant::Eossp).unwrap();
        let a = solve_exact(&manual, &SolveOptions::default()).unwrap();
        let b = solve_exact(&baseline, &SolveOptions::default()).unwrap();
        if a.z == b.z {
            equal += 1;
        } else if detail.is_empty() {
            detail = format!(", seed {seed}: {} vs {}", a.z, b.z);
        }
        outputs.push((manual, a));
        outputs.push((baseline, b));
    }
    check(
        equal == 25,
        format!("{equal}/25 identical objectives{detail}"),
    )
}

#[derive(Clone, Copy, Debug)]
enum Mutation {
    ObserveHidden,
    DownlinkHidden,
    ChargeDark,
    AuxHidden,
    DoubleTask,
    DropObservation,
    DropDownlink,
    DropCharge,
    ExtraObservation,
    ExtraCharge,
    Overflow,
    Underflow,
    Overcharge,
    Drain,
    OverBudget,
    MissingSlot,
    UnknownTarget,
    UnknownStation,
    RepeatCharge,
    UnknownAux,
}

impl Mutation {
    const ALL: [Mutation; 20] = [
        Mutation::ObserveHidden,
        Mutation::DownlinkHidden,
        Mutation::ChargeDark,
        Mutation::AuxHidden,
        Mutation::DoubleTask,
        Mutation::DropObservation,
        Mutation::DropDownlink,
        Mutation::DropCharge,
        Mutation::ExtraObservation,
        Mutation::ExtraCharge,
        Mutation::Overflow,
        Mutation::Underflow,
        Mutation::Overcharge,
        Mutation::Drain,
        Mutation::OverBudget,
        Mutation::MissingSlot,
        Mutation::UnknownTarget,
        Mutation::UnknownStation,
        Mutation::RepeatCharge,
        Mutation::UnknownAux,
    ];

    fn expected(self) -> &'static [&'static str] {
        use Mutation::*;
        match self {
            ObserveHidden => &["6a"],
            DownlinkHidden => &["6b"],
            ChargeDark => &["6d"],
            AuxHidden => &["6c"],
            DoubleTask => &["6e"],
            DropObservation | DropDownlink | ExtraObservation => &["7a", "7b"],
            DropCharge | ExtraCharge => &["8a", "8b"],
            Overflow => &["7c"],
            Underflow => &["7d"],
            Overcharge => &["9a"],
            Drain => &["9b", "9c"],
            OverBudget => &["5c"],
            MissingSlot => &["5b"],
            UnknownTarget => &["3b"],
            UnknownStation => &["3c"],
            RepeatCharge => &["3d"],
            UnknownAux => &["3e"],
        }
    }

    /// Applies the mutation at the first place it fits, if any.
    fn apply(self, inst: &ScheduleInstance, sched: &Schedule) -> Option<Schedule> {
        use Mutation::*;
        let h = &inst.horizon;
        let r = &inst.resources;
        let d = &inst.tensors.dims;
        let tz = &inst.tensors;
        for (k, sat) in live(sched) {
            let mut m = sched.clone();
            let ms = &mut m.satellites[k];
            let busy = |s: usize, t: usize| {
                sat.observations.iter().any(|e| e.stage == s && e.step == t)
                    || sat.downlinks.iter().any(|e| e.stage == s && e.step == t)
                    || sat.charges.iter().any(|e| e.stage == s && e.step == t)
            };
            match self {
                DropObservation if !sat.observations.is_empty() => {
                    let e = sat.observations[0];
                    if h.split(h.steps() - 1) != (e.stage, e.step) {
                        ms.observations.remove(0);
                        return Some(m);
                    }
                }
                DropDownlink if !sat.downlinks.is_empty() => {
                    let e = sat.downlinks[0];
                    if h.split(h.steps() - 1) != (e.stage, e.step) {
                        ms.downlinks.remove(0);
                        return Some(m);
                    }
                }
                DropCharge if !sat.charges.is_empty() => {
                    let e = sat.charges[0];
                    if h.split(h.steps() - 1) != (e.stage, e.step) {
                        ms.charges.remove(0);
                        return Some(m);
                    }
                }
                RepeatCharge if !sat.charges.is_empty() => {
                    ms.charges.push(sat.charges[0]);
                    return Some(m);
                }
                OverBudget => {
                    for s in 0..h.stages {
                        for j in 0..d.slots[k] {
                            let mut path = sat.slots.clone();
                            path[s] = j;
                            if inst.costs[k].path_cost(&path) > inst.costs[k].budget + 1e-6 {
                                ms.slots = path;
                                return Some(m);
                            }
                        }
                    }
                }
                MissingSlot => {
                    ms.slots[0] = d.slots[k];
                    return Some(m);
                }
                UnknownTarget => {
                    ms.observations.push(TaskEvent {
                        stage: 0,
                        step: 0,
                        object: d.n_priority,
                    });
                    return Some(m);
                }
                UnknownStation => {
                    ms.downlinks.push(TaskEvent {
                        stage: 0,
                        step: 0,
                        object: d.n_stations,
                    });
                    return Some(m);
                }
                UnknownAux => {
                    ms.aux_visibility.push(TaskEvent {
                        stage: 0,
                        step: 0,
                        object: d.n_aux,
                    });
                    return Some(m);
                }
                _ => {}
            }
            for g in 0..h.steps() {
                let (s, t) = h.split(g);
                let j = sat.slots[s];
                let (dl, bl) = (sat.data[g], sat.battery[g]);
                let has_next = g + 1 < h.steps();
                let recon = if h.precedes_maneuver(g) {
                    r.b_recon
                } else {
                    0.0
                };
                let ev = |object| TaskEvent {
                    stage: s,
                    step: t,
                    object,
                };
                match self {
                    ObserveHidden | ExtraObservation | Overflow | Drain | DoubleTask => {
                        for p in 0..d.n_priority {
                            let vis = tz.priority(s, k, t, j, p);
                            let fits = match self {
                                ObserveHidden => !vis && !busy(s, t),
                                ExtraObservation => vis && !busy(s, t) && has_next,
                                Overflow => vis && !busy(s, t) && dl + r.d_obs > r.d_max,
                                Drain => {
                                    vis && !busy(s, t) && bl - r.b_obs - recon - r.b_time < r.b_min
                                }
                                _ => vis && busy(s, t) && !sat.observations.contains(&ev(p)),
                            };
                            if fits {
                                ms.observations.push(ev(p));
                                return Some(m);
                            }
                        }
                    }
                    DownlinkHidden | Underflow => {
                        for q in 0..d.n_stations {
                            let vis = tz.station(s, k, t, j, q);
                            let fits = match self {
                                DownlinkHidden => !vis && !busy(s, t),
                                _ => vis && !busy(s, t) && dl - r.d_comm < r.d_min,
                            };
                            if fits {
                                ms.downlinks.push(ev(q));
                                return Some(m);
                            }
                        }
                    }
                    ChargeDark | ExtraCharge | Overcharge => {
                        let sun = tz.sun(s, k, t, j);
                        let fits = !busy(s, t)
                            && match self {
                                ChargeDark => !sun,
                                ExtraCharge => sun && has_next,
                                _ => sun && bl + r.b_charge > r.b_max,
                            };
                        if fits {
                            ms.charges
                                .push(firesched::scheduler::StepRef { stage: s, step: t });
                            return Some(m);
                        }
                    }
                    AuxHidden => {
                        for p in 0..d.n_aux {
                            if !tz.auxiliary(s, k, t, j, p) {
                                ms.aux_visibility.push(ev(p));
                                return Some(m);
                            }
                        }
                    }
                    _ => {}
                }
            }
        }
        None
    }
}

fn validator_completeness(outputs: &[(ScheduleInstance, Schedule)]) -> Outcome {
    let dirty: Vec<usize> = outputs
        .iter()
        .enumerate()
        .filter(|(_, (i, s))| !validate_schedule(s, i).is_empty())
        .map(|(n, _)| n)
        .collect();
    let mut caught = 0;
    let mut missed = Vec::new();
    for m in Mutation::ALL {
        let hit = outputs.iter().find_map(|(inst, s)| {
            let mutated = m.apply(inst, s)?;
            let ids: BTreeSet<String> = validate_schedule(&mutated, inst)
                .into_iter()
                .map(|v| v.constraint)
                .collect();
            Some(m.expected().iter().any(|e| ids.contains(*e)))
        });
        match hit {
            Some(true) => caught += 1,
            Some(false) => missed.push(format!("{m:?} (wrong family)")),
            None => missed.push(format!("{m:?} (no site)")),
        }
    }
    check(
        dirty.is_empty() && caught == 20,
        format!(
            "{} solver outputs, {} with violations; {caught}/20 mutations caught{}",
            outputs.len(),
            dirty.len(),
            if missed.is_empty() {
                String::new()
            } else {
                format!(", missed {}", missed.join(", "))
            }
        ),
    )
}

fn resource_invariants(outputs: &[(ScheduleInstance, Schedule)]) -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    for (n, (inst, s)) in outputs.iter().enumerate() {
        let h = &inst.horizon;
        let r = &inst.resources;
        for (k, sat) in live(s) {
            checked += 1;
            let (y, q, c) = (
                sat.observations.len() as f64,
                sat.downlinks.len() as f64,
                sat.charges.len() as f64,
            );
            let st = inst.start[k];
            let Some((d_end, b_end)) = sat.final_levels(h, r) else {
                bad.push(n);
                continue;
            };
            let d_ok = d_end == st.data + r.d_obs * y - r.d_comm * q;
            let b_ok = b_end
                == st.battery + r.b_charge * c
                    - r.b_obs * y
                    - r.b_comm * q
                    - r.b_time * h.steps() as f64
                    - r.b_recon * h.stages as f64;
            let within = sat
                .data
                .iter()
                .chain([&d_end])
                .all(|v| (r.d_min..=r.d_max).contains(v))
                && sat
                    .battery
                    .iter()
                    .chain([&b_end])
                    .all(|v| (r.b_min..=r.b_max).contains(v));
            if !(d_ok && b_ok && within) {
                bad.push(n);
            }
        }
    }
    check(
        bad.is_empty() && checked > 0,
        format!(
            "{checked} satellite schedules, {} break an identity or bound",
            bad.len()
        ),
    )
}

fn bayes_convergence() -> Outcome {
    let tol = 1e-12;
    let profile = DetectorProfile {
        map_value: 0.7,
        ..DetectorProfile::default()
    };
    let t0 = common::start();
    let det = |i: u32| Detection {
        box_: BoundingBox {
            x: 64.0,
            y: 64.0,
            w: 3.0,
            h: 3.0,
            confidence: 0.7,
            source_model: 1,
        },
        lat: 10.0,
        lon: 20.0,
        time: add_seconds(t0, 6000.0 * i as f64),
        satellite: 0,
    };
    let mut reg = TargetRegistry::default();
    let mut promoted_at = None;
    let mut odds_ok = true;
    for i in 0..6 {
        let out = reg.register_detection(&det(i), &profile).unwrap();
        let n = reg.get(out.target_id).unwrap().n_interpretations;
        let odds = (7.0f64 / 3.0).powi(n as i32);
        odds_ok &= (reg.get(out.target_id).unwrap().confidence - odds / (1.0 + odds)).abs() <= tol;
        if out.promoted {
            promoted_at.get_or_insert(n);
        }
    }
    let neutral = [0.1, 0.35, 0.7, 0.93]
        .iter()
        .all(|&p| (bayes_update(p, 0.4, 0.4).unwrap() - p).abs() <= tol);
    let absorbing = [0.05, 0.5, 0.99]
        .iter()
        .all(|&l| (bayes_update(1.0, l, 0.3).unwrap() - 1.0).abs() <= tol);
    check(
        promoted_at == Some(4) && odds_ok && neutral && absorbing,
        format!(
            "promoted on interpretation {promoted_at:?}, odds oracle {odds_ok}, L = f keeps prior {neutral}, prior 1 absorbs {absorbing}"
        ),
    )
}

fn raster_with(pixels: Vec<f64>, meta: firesched::scene::RasterMeta, band: Band) -> Raster {
    Raster {
        width: 16,
        height: 16,
        band,
        pixels,
        meta,
    }
}

fn fusion_properties() -> Outcome {
    let el = OrbitalElements::circular(7211.0, 98.7, 40.0, 30.0, common::start()).unwrap();
    let frame = EarthFrame::from_gmst(common::start());
    let st = propagate(&el, common::start()).unwrap();
    let meta = firesched::scene::RasterMeta::from_state(&st, &frame, 0, 22.5, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut sums_ok = true;
    for _ in 0..50 {
        let a: Vec<f64> = (0..256).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..256).map(|_| rng.gen::<f64>() * 0.5).collect();
        let (ra, rb) = (
            raster_with(a, meta, Band::Band6),
            raster_with(b, meta, Band::Band7),
        );
        let w = early_fuse_weights(&[&ra, &rb]).unwrap();
        sums_ok &= (w.iter().sum::<f64>() - 1.0).abs() <= 1e-9 && w.iter().all(|&x| x >= 0.0);
    }
    let same: Vec<f64> = (0..256).map(|_| rng.gen::<f64>()).collect();
    let r = raster_with(same, meta, Band::Band6);
    let (fused, _) = early_fuse(&[&r, &r]).unwrap();
    let identical = fused
        .pixels
        .iter()
        .zip(&r.pixels)
        .all(|(a, b)| a.to_bits() == b.to_bits());

    let bx = |x: f64, c: f64, m: u32| BoundingBox {
        x,
        y: 5.0,
        w: 2.0,
        h: 2.0,
        confidence: c,
        source_model: m,
    };
    let mut late_ok = true;
    for f in [1u32, 2, 3] {
        let out = late_fuse(&[bx(5.0, 0.8, 1)], f, 0.55).unwrap();
        late_ok &= out.len() == 1
            && (out[0].confidence - 0.8 * 1f64.min(f as f64) / f as f64).abs() <= 1e-12;
    }
    let two = late_fuse(&[bx(5.0, 0.8, 1), bx(5.0, 0.8, 2)], 2, 0.55).unwrap();
    late_ok &= two.len() == 1 && (two[0].confidence - 0.8).abs() <= 1e-12;

    let iou_ok = iou(&bx(5.0, 1.0, 1), &bx(5.0, 1.0, 1)) == 1.0
        && iou(&bx(0.0, 1.0, 1), &bx(9.0, 1.0, 1)) == 0.0
        && iou(&bx(0.0, 1.0, 1), &bx(1.0, 1.0, 1)) == 1.0 / 3.0;
    check(
        sums_ok && identical && late_ok && iou_ok,
        format!("weights sum to 1 {sums_ok}, identity bit-exact {identical}, late fusion {late_ok}, IoU suite {iou_ok}"),
    )
}

fn geolocation_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let t0 = common::start();
    let frame = EarthFrame::from_gmst(t0);
    let cfg = RenderConfig {
        noise: 0.0,
        psf_sigma: 0.8,
        ..RenderConfig::default()
    };
    let profile = DetectorProfile::default();
    let (mut n, mut worst_analytic, mut worst_rendered, mut worst_ratio) =
        (0, 0.0f64, 0.0f64, 0.0f64);
    let mut centre_exact = true;
    let mut missed = 0;
    while n < 1000 {
        let el = OrbitalElements::circular(
            rng.gen_range(6900.0..7600.0),
            rng.gen_range(20.0..110.0),
            rng.gen_range(0.0..360.0),
            rng.gen_range(0.0..360.0),
            t0,
        )
        .unwrap();
        let st = propagate(&el, add_seconds(t0, rng.gen_range(0.0..86_400.0))).unwrap();
        let sp = subpoint(&st, &frame).unwrap();
        if sp.lat.abs() > 60.0 {
            continue;
        }
        n += 1;
        let blank = render(&st, &Scene::default(), Band::Band6, &frame, &cfg, 0).unwrap();
        let meta = blank.meta;
        let gsd_deg = meta.gsd / KM_PER_DEG_LON;
        // boresight
        let c = BoundingBox {
            x: (blank.width / 2) as f64,
            y: (blank.height / 2) as f64,
            w: 1.0,
            h: 1.0,
            confidence: 1.0,
            source_model: 1,
        };
        let back = geolocate(&c, &meta, blank.width, blank.height).unwrap();
        centre_exact &= back == (sp.lat, sp.lon);
        // a ground point up to 40 px off boresight along either axis
        let reach = 40.0 * gsd_deg;
        let (lat, lon) = (
            sp.lat + rng.gen_range(-reach..reach),
            firesched::orbit::wrap_180(
                sp.lon + rng.gen_range(-reach..reach) / sp.lat.to_radians().cos(),
            ),
        );
        let (dx, dy) = meta.project(lat, lon);
        let (la, lo) = geolocate_offset(dx, dy, &meta).unwrap();
        worst_analytic = worst_analytic.max(angular_distance(la, lo, lat, lon));
        // the same point rendered, detected and geolocated from its box
        let scene = Scene {
            fires: vec![FireTruth {
                id: 0,
                lat,
                lon,
                start_time: t0,
                area: 500.0,
                brightness: 0.9,
            }],
            clutter: vec![],
        };
        let img = render(&st, &scene, Band::Band6, &frame, &cfg, 0).unwrap();
        let Some(b) = detect_blobs(&img, &profile).into_iter().next() else {
            missed += 1;
            continue;
        };
        let (la, lo) = geolocate(&b, &meta, img.width, img.height).unwrap();
        let err = angular_distance(la, lo, lat, lon);
        worst_rendered = worst_rendered.max(err);
        // ground distance in pixels
        let north = (la - lat) * KM_PER_DEG_LAT;
        let east = firesched::orbit::wrap_180(lo - lon) * KM_PER_DEG_LON * lat.to_radians().cos();
        worst_ratio = worst_ratio.max(north.hypot(east) / meta.gsd);
    }
    check(
        centre_exact && missed == 0 && worst_analytic <= 1e-9 && worst_ratio <= 1.5,
        format!(
            "1000 pairs: centre exact {centre_exact}, projection round trip {worst_analytic:.1e} deg, rendered worst {worst_rendered:.4} deg = {worst_ratio:.2} GSD, {missed} undetected"
        ),
    )
}

fn mission_scenario(variant: Variant) -> MissionConfig {
    let sats = common::satellites(1.0);
    let fires = common::polar_fires(&sats, 10, 24_000.0, 3);
    let mut cfg = common::config(2, 240, 5, 3, fires);
    cfg.scheduler = variant;
    cfg
}

fn directional_mission() -> Outcome {
    let clock = Instant::now();
    let re = run_mission(&mission_scenario(Variant::Reossp))
        .unwrap()
        .report;
    let eo = run_mission(&mission_scenario(Variant::Eossp))
        .unwrap()
        .report;
    let secs = clock.elapsed().as_secs_f64();
    let j = build_slot_grid(&common::satellites(1.0)[0].elements, 1.0, 5, 3)
        .unwrap()
        .len();
    let (dr, de) = (re.totals.data_gathered, eo.totals.data_gathered);
    let (zr, ze) = (re.blocks[1].z, eo.blocks[1].z);
    check(
        j == 27 && dr >= de && zr >= ze && secs < 600.0,
        format!(
            "J = {j}; data REOSSP {dr} MB vs EOSSP {de} MB; Block-2 z {zr} vs {ze}; {secs:.1} s"
        ),
    )
}

fn grid_and_cadence() -> Outcome {
    let el = OrbitalElements::circular(7211.0, 98.7, 40.0, 0.0, common::start()).unwrap();
    let j = build_slot_grid(&el, 1.0, 5, 15).unwrap().len();
    let cadence = passive_cadence_check(&el, 100.0).unwrap();
    let period = TAU * (7211.0f64.powi(3) / MU_EARTH).sqrt();
    let oracle = (period / 100.0).floor() as u64;
    check(
        j == 135 && (60..=61).contains(&cadence) && cadence == oracle,
        format!(
            "J = {j}; {cadence} passive observations per {period:.2} s period (oracle {oracle})"
        ),
    )
}

/// Runs the registry over a fixture: first the detections, then `passes` revisits where a real
/// fire is re-imaged and a false target produces nothing.
fn fixture_run(fx: &SceneFixture, passes: usize) -> Result<(usize, Vec<f64>, Vec<f64>), String> {
    let radius = 0.5;
    let dets = fx.detections().map_err(|e| e.to_string())?;
    let truth = &fx.scene.fires;
    let matched = match_detections(dets.iter().map(|d| (d.lat, d.lon)), truth, radius)
        .map_err(|e| e.to_string())?;
    let false_positives = dets.len() - matched.len();
    let mut reg = TargetRegistry::default();
    for d in &dets {
        reg.register_detection(d, &fx.profile)
            .map_err(|e| e.to_string())?;
    }
    let is_real = |lat: f64, lon: f64| {
        truth
            .iter()
            .any(|f| angular_distance(lat, lon, f.lat, f.lon) <= radius)
    };
    for pass in 1..=passes {
        let mut revisit = fx.clone();
        revisit.render.seed = fx.render.seed + pass as u64;
        let again = revisit.detections().map_err(|e| e.to_string())?;
        let ids: Vec<(u64, f64, f64)> =
            reg.auxiliary.iter().map(|t| (t.id, t.lat, t.lon)).collect();
        let time = add_seconds(fx.time, 86_400.0 * pass as f64);
        for (id, lat, lon) in ids {
            if is_real(lat, lon) {
                let seen = again
                    .iter()
                    .filter(|d| angular_distance(d.lat, d.lon, lat, lon) <= radius)
                    .map(|d| d.box_.confidence)
                    .fold(0.0f64, f64::max);
                if seen > 0.0 {
                    reg.reinterpret(id, seen, time, &fx.profile)
                        .map_err(|e| e.to_string())?;
                } else {
                    reg.record_miss(id, time, &fx.profile)
                        .map_err(|e| e.to_string())?;
                }
            } else {
                reg.record_miss(id, time, &fx.profile)
                    .map_err(|e| e.to_string())?;
            }
        }
    }
    let (mut real, mut fake) = (Vec::new(), Vec::new());
    for t in &reg.auxiliary {
        if is_real(t.lat, t.lon) {
            real.push(t.confidence);
        } else {
            fake.push(t.confidence);
        }
    }
    Ok((false_positives, real, fake))
}

fn false_positive_fixtures() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut ok = true;
    let mut notes = Vec::new();
    for name in ["island_day", "arid_night"] {
        let fx = match load_scene_fixture(&dir.join(format!("{name}.json"))) {
            Ok(f) => f,
            Err(e) => return Err(format!("{name}: {e}")),
        };
        let (fp, real, fake) = fixture_run(&fx, 3)?;
        let fake_max = fake.iter().cloned().fold(0.0, f64::max);
        let real_min = real.iter().cloned().fold(1.0, f64::min);
        ok &= fp >= 1 && !real.is_empty() && fake_max < 0.5 && real_min > 0.95;
        notes.push(format!(
            "{name}: {fp} false positives, worst false {fake_max:.3}, weakest true {real_min:.3}"
        ));
    }
    check(ok, notes.join("; "))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();

    let clock = Instant::now();
    let solved = solve_tiny(100);
    let elapsed = clock.elapsed();
    results.push((
        1,
        "oracle equivalence",
        oracle_equivalence(&solved, elapsed),
    ));

    let mut outputs: Vec<(ScheduleInstance, Schedule)> = Vec::new();
    for s in &solved {
        outputs.push((s.inst.clone(), s.exact.clone()));
        outputs.push((s.inst.clone(), s.brute.clone()));
    }
    results.push((2, "reduction identity", reduction_identity(&mut outputs)));
    results.push((
        3,
        "validator completeness",
        validator_completeness(&outputs),
    ));
    results.push((4, "resource invariants", resource_invariants(&outputs)));
    results.push((5, "Bayes convergence", bayes_convergence()));
    results.push((6, "fusion properties", fusion_properties()));
    results.push((7, "geolocation round trip", geolocation_round_trip()));
    results.push((8, "directional mission check", directional_mission()));
    results.push((9, "slot grid and cadence", grid_and_cadence()));
    results.push((10, "false-positive fixtures", false_positive_fixtures()));

    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(d) => println!("criterion {n:>2} PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {d}");
            }
        }
    }
    println!("{}/{} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
