//! Two-body orbit propagation, orbital slot grids and impulsive maneuver costs.
//!
//! All generated slots are circular and share the semi-major axis of the satellite they
//! were built around, which keeps maneuver costs analytic: a plane change plus a two-impulse
//! phasing maneuver, summed.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{add_seconds, gmst_deg, seconds_between, Epoch};

/// Earth gravitational parameter, km^3/s^2.
pub const MU_EARTH: f64 = 398_600.441_8;
/// Spherical Earth radius, km.
pub const EARTH_RADIUS: f64 = 6_378.137;
/// Earth rotation rate, rad/s.
pub const EARTH_ROTATION_RATE: f64 = 7.292_115_9e-5;
/// Default upper bound on waiting revolutions for phasing maneuvers.
pub const K_REV_MAX: u32 = 15;

const KEPLER_MAX_ITER: usize = 50;
const KEPLER_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitalElements {
    /// km
    pub semi_major_axis: f64,
    pub eccentricity: f64,
    /// deg
    pub inclination: f64,
    /// deg
    pub raan: f64,
    /// deg
    pub arg_perigee: f64,
    /// deg, at `epoch`
    pub true_anomaly: f64,
    pub epoch: Epoch,
}

impl OrbitalElements {
    /// Validates the invariants and normalises the angles to [0, 360).
    pub fn new(
        semi_major_axis: f64,
        eccentricity: f64,
        inclination: f64,
        raan: f64,
        arg_perigee: f64,
        true_anomaly: f64,
        epoch: Epoch,
    ) -> Result<Self> {
        let el = OrbitalElements {
            semi_major_axis,
            eccentricity,
            inclination,
            raan: wrap_360(raan),
            arg_perigee: wrap_360(arg_perigee),
            true_anomaly: wrap_360(true_anomaly),
            epoch,
        };
        el.validate()?;
        Ok(el)
    }

    pub fn circular(
        semi_major_axis: f64,
        inclination: f64,
        raan: f64,
        arg_latitude: f64,
        epoch: Epoch,
    ) -> Result<Self> {
        Self::new(
            semi_major_axis,
            0.0,
            inclination,
            raan,
            0.0,
            arg_latitude,
            epoch,
        )
    }

    /// Circular orbit of the same size and plane, keeping the argument of latitude.
    pub fn circularized(&self) -> Result<Self> {
        Self::circular(
            self.semi_major_axis,
            self.inclination,
            self.raan,
            self.arg_perigee + self.true_anomaly,
            self.epoch,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.semi_major_axis > EARTH_RADIUS) {
            return Err(Error::invalid(format!(
                "semi-major axis {} km must exceed the Earth radius",
                self.semi_major_axis
            )));
        }
        if !(0.0..1.0).contains(&self.eccentricity) {
            return Err(Error::invalid(format!(
                "eccentricity {} outside [0, 1)",
                self.eccentricity
            )));
        }
        if !(0.0..=180.0).contains(&self.inclination) {
            return Err(Error::invalid(format!(
                "inclination {} outside [0, 180]",
                self.inclination
            )));
        }
        for (name, v) in [
            ("raan", self.raan),
            ("arg_perigee", self.arg_perigee),
            ("true_anomaly", self.true_anomaly),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} is not finite")));
            }
        }
        Ok(())
    }

    /// rad/s
    pub fn mean_motion(&self) -> f64 {
        (MU_EARTH / self.semi_major_axis.powi(3)).sqrt()
    }

    /// s
    pub fn period(&self) -> f64 {
        TAU / self.mean_motion()
    }

    /// Speed on a circular orbit of this semi-major axis, km/s.
    pub fn circular_speed(&self) -> f64 {
        (MU_EARTH / self.semi_major_axis).sqrt()
    }

    /// Argument of latitude at epoch, deg.
    pub fn arg_latitude(&self) -> f64 {
        wrap_360(self.arg_perigee + self.true_anomaly)
    }

    /// The same orbit re-anchored at `t`.
    pub fn advance_to(&self, t: Epoch) -> Result<Self> {
        let nu = self.true_anomaly_after(seconds_between(self.epoch, t))?;
        Ok(OrbitalElements {
            true_anomaly: wrap_360(nu.to_degrees()),
            epoch: t,
            ..*self
        })
    }

    fn true_anomaly_after(&self, dt: f64) -> Result<f64> {
        let nu0 = self.true_anomaly.to_radians();
        if dt == 0.0 {
            return Ok(nu0);
        }
        let n = self.mean_motion();
        let e = self.eccentricity;
        if e == 0.0 {
            return Ok(nu0 + n * dt);
        }
        let e0 = 2.0
            * ((1.0 - e).sqrt() * (nu0 / 2.0).sin()).atan2((1.0 + e).sqrt() * (nu0 / 2.0).cos());
        let m0 = e0 - e * e0.sin();
        let m = (m0 + n * dt).rem_euclid(TAU);
        let ecc_anomaly = solve_kepler(m, e)?;
        Ok(2.0
            * ((1.0 + e).sqrt() * (ecc_anomaly / 2.0).sin())
                .atan2((1.0 - e).sqrt() * (ecc_anomaly / 2.0).cos()))
    }
}

/// Solves `E - e sin E = M` by Newton iteration.
pub fn solve_kepler(mean_anomaly: f64, e: f64) -> Result<f64> {
    let mut ecc = if e > 0.8 { PI } else { mean_anomaly };
    for _ in 0..KEPLER_MAX_ITER {
        let f = ecc - e * ecc.sin() - mean_anomaly;
        let step = f / (1.0 - e * ecc.cos());
        ecc -= step;
        if step.abs() < KEPLER_TOL {
            return Ok(ecc);
        }
    }
    Err(Error::KeplerNonConvergence {
        iterations: KEPLER_MAX_ITER,
        eccentricity: e,
        mean_anomaly,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    /// ECI, km
    pub position: Vector3<f64>,
    /// ECI, km/s
    pub velocity: Vector3<f64>,
    pub time: Epoch,
}

impl StateVector {
    pub fn radius(&self) -> f64 {
        self.position.norm()
    }

    pub fn altitude(&self) -> f64 {
        self.radius() - EARTH_RADIUS
    }

    /// Specific orbital energy, km^2/s^2.
    pub fn specific_energy(&self) -> f64 {
        self.velocity.norm_squared() / 2.0 - MU_EARTH / self.radius()
    }
}

/// Closed-form two-body propagation of `elements` to `t`.
pub fn propagate(elements: &OrbitalElements, t: Epoch) -> Result<StateVector> {
    let dt = seconds_between(elements.epoch, t);
    if dt < 0.0 {
        return Err(Error::invalid(format!(
            "propagation target precedes the epoch by {} s",
            -dt
        )));
    }
    let nu = elements.true_anomaly_after(dt)?;
    let e = elements.eccentricity;
    let p = elements.semi_major_axis * (1.0 - e * e);
    let r = p / (1.0 + e * nu.cos());
    let r_pqw = Vector3::new(r * nu.cos(), r * nu.sin(), 0.0);
    let k = (MU_EARTH / p).sqrt();
    let v_pqw = Vector3::new(-k * nu.sin(), k * (e + nu.cos()), 0.0);
    let rot = perifocal_to_eci(elements);
    Ok(StateVector {
        position: rot * r_pqw,
        velocity: rot * v_pqw,
        time: t,
    })
}

fn perifocal_to_eci(el: &OrbitalElements) -> Matrix3<f64> {
    let (so, co) = el.raan.to_radians().sin_cos();
    let (si, ci) = el.inclination.to_radians().sin_cos();
    let (sw, cw) = el.arg_perigee.to_radians().sin_cos();
    Matrix3::new(
        co * cw - so * sw * ci,
        -co * sw - so * cw * ci,
        so * si,
        so * cw + co * sw * ci,
        -so * sw + co * cw * ci,
        -co * si,
        sw * si,
        cw * si,
        ci,
    )
}

/// Earth orientation: a Greenwich hour angle pinned at a reference epoch, advancing at the
/// sidereal rotation rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarthFrame {
    pub reference_epoch: Epoch,
    /// deg
    pub greenwich_at_reference: f64,
}

impl EarthFrame {
    pub fn aligned(reference_epoch: Epoch, greenwich_at_reference: f64) -> Self {
        EarthFrame {
            reference_epoch,
            greenwich_at_reference,
        }
    }

    /// Frame aligned to mean sidereal time at `reference_epoch`.
    pub fn from_gmst(reference_epoch: Epoch) -> Self {
        Self::aligned(reference_epoch, gmst_deg(reference_epoch))
    }

    /// deg
    pub fn greenwich_angle(&self, t: Epoch) -> f64 {
        let dt = seconds_between(self.reference_epoch, t);
        wrap_360(self.greenwich_at_reference + (EARTH_ROTATION_RATE * dt).to_degrees())
    }

    /// Unit vector (ECI) of the ground point at `lat`, `lon` (deg) at time `t`.
    pub fn ground_unit_vector(&self, lat: f64, lon: f64, t: Epoch) -> Vector3<f64> {
        let (slat, clat) = lat.to_radians().sin_cos();
        let (slon, clon) = (lon + self.greenwich_angle(t)).to_radians().sin_cos();
        Vector3::new(clat * clon, clat * slon, slat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subpoint {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

/// Spherical-Earth subsatellite point.
pub fn subpoint(state: &StateVector, frame: &EarthFrame) -> Result<Subpoint> {
    let r = state.radius();
    if !(r > EARTH_RADIUS) {
        return Err(Error::invalid(format!(
            "position radius {r} km is inside the Earth"
        )));
    }
    let p = state.position;
    let lat = (p.z / r).clamp(-1.0, 1.0).asin().to_degrees();
    let lon = wrap_180(p.y.atan2(p.x).to_degrees() - frame.greenwich_angle(state.time));
    Ok(Subpoint {
        lat,
        lon,
        alt: r - EARTH_RADIUS,
    })
}

/// Candidate orbital slots for one satellite.
///
/// Slot 0 is always the satellite's current orbit (the zero-cost stay-put option). Slots are
/// laid out plane-major: `slots[plane * anomaly_count + m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotGrid {
    pub initial: OrbitalElements,
    pub slots: Vec<OrbitalElements>,
    /// (inclination-offset planes, RAAN-offset planes), both counting the nominal plane.
    pub plane_counts: (usize, usize),
    pub anomaly_count: usize,
    /// deg
    pub max_inclination_offset: f64,
    /// deg
    pub max_raan_offset: f64,
}

impl SlotGrid {
    /// Grid holding only the current orbit.
    pub fn stay_put(current: OrbitalElements) -> Self {
        SlotGrid {
            initial: current,
            slots: vec![current],
            plane_counts: (1, 1),
            anomaly_count: 1,
            max_inclination_offset: 0.0,
            max_raan_offset: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn initial_index(&self) -> usize {
        0
    }
}

/// Largest inclination change affordable with `budget` km/s at circular speed `v`, deg.
pub fn max_plane_offset(budget: f64, v: f64) -> f64 {
    2.0 * (budget / (2.0 * v)).min(1.0).asin().to_degrees()
}

/// Builds the slot grid around `current`: `n_planes` inclination-offset planes and
/// `n_planes` RAAN-offset planes sharing the nominal plane, each with `n_anomaly` evenly
/// spaced phase options. The outermost planes cost exactly the full budget to reach.
pub fn build_slot_grid(
    current: &OrbitalElements,
    budget: f64,
    n_planes: usize,
    n_anomaly: usize,
) -> Result<SlotGrid> {
    if !(budget >= 0.0) {
        return Err(Error::invalid(format!(
            "budget {budget} must be non-negative"
        )));
    }
    if n_planes == 0 || n_planes % 2 == 0 {
        return Err(Error::invalid(format!(
            "n_planes {n_planes} must be odd and at least 1"
        )));
    }
    if n_anomaly == 0 {
        return Err(Error::invalid("n_anomaly must be at least 1"));
    }
    let current = OrbitalElements {
        eccentricity: 0.0,
        ..*current
    };
    let v = current.circular_speed();
    let di_max = max_plane_offset(budget, v);
    let i0 = current.inclination;
    let sin2 = i0.to_radians().sin().powi(2);
    let draan_max = if di_max == 0.0 || sin2 < 1e-12 {
        0.0
    } else {
        let cos_theta = di_max.to_radians().cos();
        let c = ((cos_theta - (1.0 - sin2)) / sin2).clamp(-1.0, 1.0);
        c.acos().to_degrees()
    };

    let half = (n_planes / 2) as i64;
    // (inclination, raan) per plane, nominal first
    let mut planes = vec![(i0, current.raan)];
    let mut n_inc = 1;
    let mut n_raan = 1;
    if di_max > 0.0 && half > 0 {
        for m in (-half..=half).filter(|&m| m != 0) {
            let inc = (i0 + di_max * m as f64 / half as f64).clamp(0.0, 180.0);
            planes.push((inc, current.raan));
            n_inc += 1;
        }
    }
    if draan_max > 0.0 && half > 0 {
        for m in (-half..=half).filter(|&m| m != 0) {
            planes.push((
                i0,
                wrap_360(current.raan + draan_max * m as f64 / half as f64),
            ));
            n_raan += 1;
        }
    }

    let mut slots = Vec::with_capacity(planes.len() * n_anomaly);
    for &(inclination, raan) in &planes {
        for m in 0..n_anomaly {
            slots.push(OrbitalElements {
                inclination,
                raan,
                true_anomaly: wrap_360(current.true_anomaly + 360.0 * m as f64 / n_anomaly as f64),
                ..current
            });
        }
    }
    Ok(SlotGrid {
        initial: current,
        slots,
        plane_counts: (n_inc, n_raan),
        anomaly_count: n_anomaly,
        max_inclination_offset: di_max,
        max_raan_offset: draan_max,
    })
}

/// Angle between the orbital planes (i1, raan1) and (i2, raan2), deg.
pub fn plane_change_angle(i1: f64, raan1: f64, i2: f64, raan2: f64) -> f64 {
    let (si1, ci1) = i1.to_radians().sin_cos();
    let (si2, ci2) = i2.to_radians().sin_cos();
    let c = ci1 * ci2 + si1 * si2 * (raan2 - raan1).to_radians().cos();
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Cost of a phasing maneuver over exactly `k_rev` revolutions on a circular orbit of radius
/// `a`, for a target `phase_deg` ahead. The satellite either catches up (shorter phasing
/// period) or drops back by the complementary angle (longer period); the cheaper feasible
/// option wins. `None` when both phasing ellipses dip below the surface.
pub fn phasing_cost_for(a: f64, phase_deg: f64, k_rev: u32) -> Option<f64> {
    let phase = wrap_360(phase_deg);
    if phase == 0.0 {
        return Some(0.0);
    }
    let period = TAU * (a.powi(3) / MU_EARTH).sqrt();
    let v = (MU_EARTH / a).sqrt();
    let k = f64::from(k_rev);
    [
        1.0 - phase / (360.0 * k),
        1.0 + (360.0 - phase) / (360.0 * k),
    ]
    .into_iter()
    .filter_map(|ratio| {
        let t_phase = period * ratio;
        if !(t_phase > 0.0) {
            return None;
        }
        let a_phase = (MU_EARTH * (t_phase / TAU).powi(2)).cbrt();
        // the burn point sits at r = a, the far apsis at 2 a_phase - a
        if 2.0 * a_phase - a <= EARTH_RADIUS {
            return None;
        }
        let v_phase = (MU_EARTH * (2.0 / a - 1.0 / a_phase)).sqrt();
        Some(2.0 * (v_phase - v).abs())
    })
    .min_by(f64::total_cmp)
}

/// Cheapest phasing cost over `1..=k_rev_max` waiting revolutions.
pub fn phasing_cost(a: f64, phase_deg: f64, k_rev_max: u32) -> Result<f64> {
    (1..=k_rev_max)
        .filter_map(|k| phasing_cost_for(a, phase_deg, k))
        .min_by(f64::total_cmp)
        .ok_or(Error::NoFeasiblePhasing { phase_deg })
}

/// Impulsive cost (km/s) of moving between two circular slots of equal radius: a plane
/// change followed by a phasing maneuver.
pub fn maneuver_cost(from: &OrbitalElements, to: &OrbitalElements) -> Result<f64> {
    maneuver_cost_with(from, to, K_REV_MAX)
}

pub fn maneuver_cost_with(
    from: &OrbitalElements,
    to: &OrbitalElements,
    k_rev_max: u32,
) -> Result<f64> {
    if from.eccentricity > 1e-9 || to.eccentricity > 1e-9 {
        return Err(Error::invalid("maneuver cost requires circular orbits"));
    }
    if (from.semi_major_axis - to.semi_major_axis).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "maneuver cost requires equal semi-major axes ({} vs {} km)",
            from.semi_major_axis, to.semi_major_axis
        )));
    }
    let a = from.semi_major_axis;
    let v = from.circular_speed();
    let theta = plane_change_angle(from.inclination, from.raan, to.inclination, to.raan);
    let plane = 2.0 * v * (theta.to_radians() / 2.0).sin();

    // phase of `to` relative to `from`, compared at `from`'s epoch
    let drift = (from.mean_motion() * seconds_between(to.epoch, from.epoch)).to_degrees();
    let mut phase = wrap_360(to.arg_latitude() + drift - from.arg_latitude());
    if phase < 1e-9 || 360.0 - phase < 1e-9 {
        phase = 0.0;
    }
    let phasing = phasing_cost(a, phase, k_rev_max)?;
    Ok(plane + phasing)
}

/// Row-major cost table from the slots of one stage to the slots of the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl CostTable {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ExtentMismatch(format!(
                "cost table {rows}x{cols} given {} entries",
                data.len()
            )));
        }
        if data.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::invalid(
                "maneuver costs must be finite and non-negative",
            ));
        }
        Ok(CostTable { rows, cols, data })
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.cols + to]
    }
}

/// Maneuver costs for one satellite, `stages[s]` covering the transition into stage `s + 1`
/// (so `stages[0]` has a single row: the initial condition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverCostMatrix {
    pub stages: Vec<CostTable>,
    /// km/s
    pub budget: f64,
}

impl ManeuverCostMatrix {
    /// Costs for a grid reused across `n_stages` stages.
    pub fn for_grid(grid: &SlotGrid, n_stages: usize, budget: f64, k_rev_max: u32) -> Result<Self> {
        let j = grid.len();
        let first: Vec<f64> = grid
            .slots
            .iter()
            .map(|to| maneuver_cost_with(&grid.initial, to, k_rev_max))
            .collect::<Result<_>>()?;
        let mut stages = vec![CostTable::new(1, j, first)?];
        if n_stages > 1 {
            let mut data = Vec::with_capacity(j * j);
            for from in &grid.slots {
                for to in &grid.slots {
                    data.push(maneuver_cost_with(from, to, k_rev_max)?);
                }
            }
            let table = CostTable::new(j, j, data)?;
            stages.extend(std::iter::repeat(table).take(n_stages - 1));
        }
        Ok(ManeuverCostMatrix { stages, budget })
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    /// Slot count of stage `s` (0-based, i.e. stage `s + 1`).
    pub fn slots_in_stage(&self, s: usize) -> usize {
        self.stages[s].cols
    }

    /// Cost into stage `s` (0-based) from slot `from` of the previous stage.
    pub fn cost(&self, s: usize, from: usize, to: usize) -> f64 {
        self.stages[s].get(from, to)
    }

    /// Total cost of a slot path (one slot per stage), starting from the initial condition.
    pub fn path_cost(&self, path: &[usize]) -> f64 {
        let mut prev = 0;
        let mut total = 0.0;
        for (s, &j) in path.iter().enumerate() {
            total += self.cost(s, prev, j);
            prev = j;
        }
        total
    }
}

/// Parses two- or three-line element sets into osculating Keplerian elements.
///
/// Mean elements are taken as osculating (no SGP4); adequate for scheduling-level visibility.
pub fn parse_tle(text: &str) -> Result<Vec<(String, OrbitalElements)>> {
    let lines: Vec<&str> = text
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.trim().is_empty())
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let (name, l1, l2) = if lines[i].starts_with("1 ")
            && i + 1 < lines.len()
            && lines[i + 1].starts_with("2 ")
        {
            let norad = lines[i].get(2..7).unwrap_or("").trim().to_string();
            i += 2;
            (norad, lines[i - 2], lines[i - 1])
        } else if i + 2 < lines.len()
            && lines[i + 1].starts_with("1 ")
            && lines[i + 2].starts_with("2 ")
        {
            i += 3;
            (
                lines[i - 3].trim().trim_start_matches("0 ").to_string(),
                lines[i - 2],
                lines[i - 1],
            )
        } else {
            return Err(Error::Format(format!(
                "TLE line {}: expected a line-1/line-2 pair",
                i + 1
            )));
        };
        out.push((name, tle_elements(l1, l2)?));
    }
    Ok(out)
}

fn tle_field(line: &str, range: std::ops::Range<usize>, what: &str) -> Result<f64> {
    let raw = line.get(range.clone()).ok_or_else(|| {
        Error::Format(format!(
            "TLE field {what} missing (columns {}-{})",
            range.start + 1,
            range.end
        ))
    })?;
    raw.trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("TLE field {what}: cannot parse `{}`", raw.trim())))
}

fn tle_elements(l1: &str, l2: &str) -> Result<OrbitalElements> {
    let epoch_field = tle_field(l1, 18..32, "epoch")?;
    let yy = (epoch_field / 1000.0).floor() as i32;
    let day = epoch_field - f64::from(yy) * 1000.0;
    let year = if yy < 57 { 2000 + yy } else { 1900 + yy };
    let jan1 = chrono::NaiveDate::from_ymd_opt(year, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .ok_or_else(|| Error::Format(format!("TLE epoch year {year}")))?
        .and_utc();
    let epoch = add_seconds(jan1, (day - 1.0) * 86_400.0);

    let inclination = tle_field(l2, 8..16, "inclination")?;
    let raan = tle_field(l2, 17..25, "raan")?;
    let ecc_raw = l2
        .get(26..33)
        .ok_or_else(|| Error::Format("TLE field eccentricity missing".into()))?
        .trim();
    let eccentricity = format!("0.{ecc_raw}")
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("TLE field eccentricity: `{ecc_raw}`")))?;
    let arg_perigee = tle_field(l2, 34..42, "arg_perigee")?;
    let mean_anomaly = tle_field(l2, 43..51, "mean_anomaly")?;
    let revs_per_day = tle_field(l2, 52..63, "mean_motion")?;
    let n = revs_per_day * TAU / 86_400.0;
    let a = (MU_EARTH / (n * n)).cbrt();
    let ecc_anomaly = solve_kepler(mean_anomaly.to_radians(), eccentricity)?;
    let e = eccentricity;
    let nu = 2.0
        * ((1.0 + e).sqrt() * (ecc_anomaly / 2.0).sin())
            .atan2((1.0 - e).sqrt() * (ecc_anomaly / 2.0).cos());
    OrbitalElements::new(a, e, inclination, raan, arg_perigee, nu.to_degrees(), epoch)
}

pub fn wrap_360(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Wraps to (-180, 180].
pub fn wrap_180(deg: f64) -> f64 {
    let w = wrap_360(deg);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}
