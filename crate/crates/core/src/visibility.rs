//! Line-of-sight predicates and the binary visibility tensors the scheduler consumes.
//!
//! Tensors are sampled at the start instant of every time step. For stage `s` (0-based),
//! satellite `k`, step `t` within the stage, slot `j` and object `p`, the absolute time is
//! `start + (s * steps_per_stage + t) * step`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbit::{propagate, EarthFrame, SlotGrid, StateVector, EARTH_RADIUS};
use crate::par::Execution;
use crate::scheduler::ScheduleHorizon;
use crate::time::{add_seconds, julian_date, Epoch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    PriorityTarget,
    AuxiliaryTarget,
    GroundStation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundPoint {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub kind: PointKind,
}

impl GroundPoint {
    pub fn new(id: impl Into<String>, lat: f64, lon: f64, kind: PointKind) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(lon > -180.0 && lon <= 180.0) {
            return Err(Error::invalid(format!(
                "ground point ({lat}, {lon}) outside lat [-90, 90], lon (-180, 180]"
            )));
        }
        Ok(GroundPoint {
            id: id.into(),
            lat,
            lon,
            kind,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisibilityConfig {
    /// deg
    pub sensor_half_angle: f64,
    /// deg
    pub station_min_elevation: f64,
    /// Also require stations to fall inside the sensor cone.
    pub station_uses_cone: bool,
}

impl Default for VisibilityConfig {
    fn default() -> Self {
        VisibilityConfig {
            sensor_half_angle: 22.5,
            station_min_elevation: 10.0,
            station_uses_cone: false,
        }
    }
}

const ANGLE_EPS_DEG: f64 = 1e-9;

/// Nadir-cone visibility of a ground point with an unobstructed line of sight.
pub fn target_visible(
    state: &StateVector,
    point: &GroundPoint,
    sensor_half_angle: f64,
    frame: &EarthFrame,
) -> bool {
    let u = frame.ground_unit_vector(point.lat, point.lon, state.time);
    in_cone(&state.position, &u, sensor_half_angle)
}

fn in_cone(r: &Vector3<f64>, ground_unit: &Vector3<f64>, half_angle: f64) -> bool {
    // above the point's horizon
    if ground_unit.dot(r) <= EARTH_RADIUS {
        return false;
    }
    let p = ground_unit * EARTH_RADIUS;
    let d = p - r;
    let dn = d.norm();
    if dn == 0.0 {
        return true;
    }
    let cos_off = (-r.dot(&d) / (r.norm() * dn)).clamp(-1.0, 1.0);
    cos_off.acos().to_degrees() <= half_angle + ANGLE_EPS_DEG
}

/// Elevation of the satellite above the local horizon of (`lat`, `lon`), deg.
pub fn elevation_deg(state: &StateVector, lat: f64, lon: f64, frame: &EarthFrame) -> f64 {
    let u = frame.ground_unit_vector(lat, lon, state.time);
    elevation_from(&state.position, &u)
}

fn elevation_from(r: &Vector3<f64>, ground_unit: &Vector3<f64>) -> f64 {
    let d = r - ground_unit * EARTH_RADIUS;
    (ground_unit.dot(&d) / d.norm())
        .clamp(-1.0, 1.0)
        .asin()
        .to_degrees()
}

pub fn station_visible(
    state: &StateVector,
    station: &GroundPoint,
    min_elevation: f64,
    frame: &EarthFrame,
) -> bool {
    elevation_deg(state, station.lat, station.lon, frame) >= min_elevation - ANGLE_EPS_DEG
}

/// Unit vector from the Earth toward the Sun (ECI, mean equator), low-precision almanac
/// series; good to about 0.01 deg.
pub fn sun_direction(t: Epoch) -> Vector3<f64> {
    let tu = (julian_date(t) - 2_451_545.0) / 36_525.0;
    let mean_lon = 280.460 + 36_000.771 * tu;
    let m = (357.529_109_2 + 35_999.050_34 * tu).to_radians();
    let ecl = (mean_lon + 1.914_666_471 * m.sin() + 0.019_994_643 * (2.0 * m).sin()).to_radians();
    let obl = (23.439_291 - 0.013_004_2 * tu).to_radians();
    Vector3::new(ecl.cos(), obl.cos() * ecl.sin(), obl.sin() * ecl.sin())
}

/// Outside the cylindrical Earth shadow.
pub fn sun_visible(state: &StateVector) -> bool {
    sunlit(&state.position, &sun_direction(state.time))
}

fn sunlit(r: &Vector3<f64>, sun: &Vector3<f64>) -> bool {
    let along = r.dot(sun);
    let perp = (r - sun * along).norm();
    !(along < 0.0 && perp < EARTH_RADIUS)
}

/// Dense bitset over a row-major index space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitTensor {
    pub shape: Vec<usize>,
    pub words: Vec<u64>,
}

impl BitTensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len: usize = shape.iter().product();
        BitTensor {
            shape: shape.to_vec(),
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| {
            debug_assert!(i < n, "index {i} out of extent {n}");
            acc * n + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> bool {
        let o = self.offset(idx);
        self.words[o / 64] >> (o % 64) & 1 == 1
    }

    pub fn set(&mut self, idx: &[usize], value: bool) {
        let o = self.offset(idx);
        if value {
            self.words[o / 64] |= 1 << (o % 64);
        } else {
            self.words[o / 64] &= !(1 << (o % 64));
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorDims {
    pub stages: usize,
    pub satellites: usize,
    pub steps_per_stage: usize,
    /// Slot count per satellite, shared by every stage.
    pub slots: Vec<usize>,
    pub n_priority: usize,
    pub n_aux: usize,
    pub n_stations: usize,
}

/// Visibility of priority targets (`v`), auxiliary targets (`u`), ground stations (`w`) and
/// the Sun (`h`). Each vector holds one tensor per (stage, satellite), stage-major; tensors are
/// shaped `[step, slot, object]` (`h`: `[step, slot]`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibilityTensors {
    pub dims: TensorDims,
    pub v: Vec<BitTensor>,
    pub u: Vec<BitTensor>,
    pub w: Vec<BitTensor>,
    pub h: Vec<BitTensor>,
}

impl VisibilityTensors {
    pub fn zeros(dims: TensorDims) -> Self {
        let mut v = Vec::new();
        let mut u = Vec::new();
        let mut w = Vec::new();
        let mut h = Vec::new();
        for _s in 0..dims.stages {
            for k in 0..dims.satellites {
                let j = dims.slots[k];
                let t = dims.steps_per_stage;
                v.push(BitTensor::zeros(&[t, j, dims.n_priority]));
                u.push(BitTensor::zeros(&[t, j, dims.n_aux]));
                w.push(BitTensor::zeros(&[t, j, dims.n_stations]));
                h.push(BitTensor::zeros(&[t, j]));
            }
        }
        VisibilityTensors { dims, v, u, w, h }
    }

    fn slot(&self, s: usize, k: usize) -> usize {
        s * self.dims.satellites + k
    }

    pub fn priority(&self, s: usize, k: usize, t: usize, j: usize, p: usize) -> bool {
        self.v[self.slot(s, k)].get(&[t, j, p])
    }

    pub fn auxiliary(&self, s: usize, k: usize, t: usize, j: usize, p: usize) -> bool {
        self.u[self.slot(s, k)].get(&[t, j, p])
    }

    pub fn station(&self, s: usize, k: usize, t: usize, j: usize, g: usize) -> bool {
        self.w[self.slot(s, k)].get(&[t, j, g])
    }

    pub fn sun(&self, s: usize, k: usize, t: usize, j: usize) -> bool {
        self.h[self.slot(s, k)].get(&[t, j])
    }

    pub fn set_priority(&mut self, s: usize, k: usize, t: usize, j: usize, p: usize, value: bool) {
        let i = self.slot(s, k);
        self.v[i].set(&[t, j, p], value);
    }

    pub fn set_auxiliary(&mut self, s: usize, k: usize, t: usize, j: usize, p: usize, value: bool) {
        let i = self.slot(s, k);
        self.u[i].set(&[t, j, p], value);
    }

    pub fn set_station(&mut self, s: usize, k: usize, t: usize, j: usize, g: usize, value: bool) {
        let i = self.slot(s, k);
        self.w[i].set(&[t, j, g], value);
    }

    pub fn set_sun(&mut self, s: usize, k: usize, t: usize, j: usize, value: bool) {
        let i = self.slot(s, k);
        self.h[i].set(&[t, j], value);
    }

    /// Appends the priority columns of `extra`, which must match `self` in every extent except
    /// the priority count and carry no other objects.
    pub fn append_priority(&mut self, extra: &VisibilityTensors) -> Result<()> {
        let (a, b) = (&self.dims, &extra.dims);
        if a.stages != b.stages
            || a.satellites != b.satellites
            || a.steps_per_stage != b.steps_per_stage
            || a.slots != b.slots
        {
            return Err(Error::ExtentMismatch(
                "appended priority tensors cover a different horizon or grid".into(),
            ));
        }
        let n_old = a.n_priority;
        let n_new = n_old + b.n_priority;
        for s in 0..a.stages {
            for k in 0..a.satellites {
                let i = self.slot(s, k);
                let (steps, slots) = (a.steps_per_stage, a.slots[k]);
                let mut v = BitTensor::zeros(&[steps, slots, n_new]);
                for t in 0..steps {
                    for j in 0..slots {
                        for p in 0..n_old {
                            if self.v[i].get(&[t, j, p]) {
                                v.set(&[t, j, p], true);
                            }
                        }
                        for p in 0..b.n_priority {
                            if extra.v[i].get(&[t, j, p]) {
                                v.set(&[t, j, n_old + p], true);
                            }
                        }
                    }
                }
                self.v[i] = v;
            }
        }
        self.dims.n_priority = n_new;
        Ok(())
    }

    /// Checks that every tensor has the extents its dims promise.
    pub fn check(&self) -> Result<()> {
        let d = &self.dims;
        if d.slots.len() != d.satellites {
            return Err(Error::ExtentMismatch(format!(
                "{} slot counts for {} satellites",
                d.slots.len(),
                d.satellites
            )));
        }
        let n = d.stages * d.satellites;
        for (name, set) in [
            ("V", &self.v),
            ("U", &self.u),
            ("W", &self.w),
            ("H", &self.h),
        ] {
            if set.len() != n {
                return Err(Error::ExtentMismatch(format!(
                    "{name} holds {} tensors, expected {n}",
                    set.len()
                )));
            }
        }
        for s in 0..d.stages {
            for k in 0..d.satellites {
                let i = self.slot(s, k);
                let (t, j) = (d.steps_per_stage, d.slots[k]);
                let expect = [
                    ("V", &self.v[i], vec![t, j, d.n_priority]),
                    ("U", &self.u[i], vec![t, j, d.n_aux]),
                    ("W", &self.w[i], vec![t, j, d.n_stations]),
                    ("H", &self.h[i], vec![t, j]),
                ];
                for (name, tensor, shape) in expect {
                    if tensor.shape != shape || tensor.words.len() != tensor.len().div_ceil(64) {
                        return Err(Error::ExtentMismatch(format!(
                            "{name}[stage {s}, satellite {k}] has shape {:?}, expected {shape:?}",
                            tensor.shape
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Writes the versioned cache format: magic, version, JSON dims header, then the packed
    /// little-endian words of V, U, W, H in (stage, satellite) order.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(f);
        let header = serde_json::to_vec(&self.dims)?;
        let mut buf = Vec::new();
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        for set in [&self.v, &self.u, &self.w, &self.h] {
            for tensor in set {
                for word in &tensor.words {
                    buf.extend_from_slice(&word.to_le_bytes());
                }
            }
        }
        out.write_all(&buf).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(f)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        Self::from_cache_bytes(&bytes)
    }

    pub fn from_cache_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(Error::Format("tensor cache truncated".into()));
            }
            let (head, rest) = cur.split_at(n);
            cur = rest;
            Ok(head)
        };
        if take(4)? != CACHE_MAGIC {
            return Err(Error::Format("not a visibility tensor cache".into()));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
        if version != CACHE_VERSION {
            return Err(Error::Format(format!(
                "unsupported tensor cache version {version}"
            )));
        }
        let hlen = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let dims: TensorDims = serde_json::from_slice(take(hlen)?)?;
        let mut tensors = VisibilityTensors::zeros(dims);
        for set in [
            &mut tensors.v,
            &mut tensors.u,
            &mut tensors.w,
            &mut tensors.h,
        ] {
            for tensor in set.iter_mut() {
                for word in tensor.words.iter_mut() {
                    *word = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
                }
            }
        }
        if !cur.is_empty() {
            return Err(Error::Format(format!(
                "{} trailing bytes in tensor cache",
                cur.len()
            )));
        }
        Ok(tensors)
    }
}

const CACHE_MAGIC: &[u8; 4] = b"FSVT";
const CACHE_VERSION: u32 = 1;

/// Ground points to evaluate, split by role.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointSets<'a> {
    pub priority: &'a [GroundPoint],
    pub auxiliary: &'a [GroundPoint],
    pub stations: &'a [GroundPoint],
}

/// Evaluates every predicate for every (stage, satellite, step, slot, object).
#[allow(clippy::too_many_arguments)]
pub fn compute_tensors(
    grids: &[SlotGrid],
    horizon: &ScheduleHorizon,
    start: Epoch,
    points: PointSets<'_>,
    frame: &EarthFrame,
    cfg: &VisibilityConfig,
    exec: Execution,
) -> Result<VisibilityTensors> {
    let dims = TensorDims {
        stages: horizon.stages,
        satellites: grids.len(),
        steps_per_stage: horizon.steps_per_stage,
        slots: grids.iter().map(SlotGrid::len).collect(),
        n_priority: points.priority.len(),
        n_aux: points.auxiliary.len(),
        n_stations: points.stations.len(),
    };
    let n_steps = horizon.steps();
    let times: Vec<Epoch> = (0..n_steps)
        .map(|g| add_seconds(start, g as f64 * horizon.step))
        .collect();
    let unit = |set: &[GroundPoint]| -> Vec<Vec<Vector3<f64>>> {
        times
            .iter()
            .map(|&t| {
                set.iter()
                    .map(|p| frame.ground_unit_vector(p.lat, p.lon, t))
                    .collect()
            })
            .collect()
    };
    let pri = unit(points.priority);
    let aux = unit(points.auxiliary);
    let sta = unit(points.stations);
    let sun: Vec<Vector3<f64>> = times.iter().map(|&t| sun_direction(t)).collect();

    // one job per (stage, satellite, slot); each returns its column of bits
    let jobs: Vec<(usize, usize, usize)> = (0..dims.stages)
        .flat_map(|s| {
            (0..grids.len()).flat_map(move |k| (0..grids[k].len()).map(move |j| (s, k, j)))
        })
        .collect();
    let columns = exec.try_map(jobs.len(), |n| -> Result<SlotColumn> {
        let (s, k, j) = jobs[n];
        let slot = &grids[k].slots[j];
        let mut col = SlotColumn::default();
        for t in 0..horizon.steps_per_stage {
            let g = s * horizon.steps_per_stage + t;
            let state = propagate(slot, times[g])?;
            let r = state.position;
            col.v
                .extend(pri[g].iter().map(|u| in_cone(&r, u, cfg.sensor_half_angle)));
            col.u
                .extend(aux[g].iter().map(|u| in_cone(&r, u, cfg.sensor_half_angle)));
            col.w.extend(sta[g].iter().map(|u| {
                elevation_from(&r, u) >= cfg.station_min_elevation - ANGLE_EPS_DEG
                    && (!cfg.station_uses_cone || in_cone(&r, u, cfg.sensor_half_angle))
            }));
            col.h.push(sunlit(&r, &sun[g]));
        }
        Ok(col)
    })?;

    let mut tensors = VisibilityTensors::zeros(dims);
    for (&(s, k, j), col) in jobs.iter().zip(&columns) {
        let d = &tensors.dims;
        let (np, na, ng) = (d.n_priority, d.n_aux, d.n_stations);
        for t in 0..horizon.steps_per_stage {
            for p in 0..np {
                if col.v[t * np + p] {
                    tensors.set_priority(s, k, t, j, p, true);
                }
            }
            for p in 0..na {
                if col.u[t * na + p] {
                    tensors.set_auxiliary(s, k, t, j, p, true);
                }
            }
            for g in 0..ng {
                if col.w[t * ng + g] {
                    tensors.set_station(s, k, t, j, g, true);
                }
            }
            if col.h[t] {
                tensors.set_sun(s, k, t, j, true);
            }
        }
    }
    Ok(tensors)
}

#[derive(Default)]
struct SlotColumn {
    v: Vec<bool>,
    u: Vec<bool>,
    w: Vec<bool>,
    h: Vec<bool>,
}
