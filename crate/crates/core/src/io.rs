//! Scenario bundles, instance and schedule files, and report emission.
//!
//! JSON floats are written in Rust's shortest round-trip form and parsed with
//! `serde_json`'s exact float parser, so every JSON artifact reloads bit for bit. CSV uses
//! commas, LF line endings and a header row.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use nalgebra::Vector3;

use crate::detect::{Detection, DetectorProfile};
use crate::mission::{
    detect_view, view_rasters, FireSource, FusionMode, MissionReport, MissionRun, SatelliteConfig,
};
use crate::orbit::{
    parse_tle, EarthFrame, ManeuverCostMatrix, StateVector, EARTH_RADIUS, MU_EARTH,
};
use crate::scene::{Raster, RenderConfig, Scene};
use crate::scheduler::{
    ResourceParams, SatelliteStart, Schedule, ScheduleHorizon, ScheduleInstance, Variant, Violation,
};
use crate::time::Epoch;
use crate::visibility::VisibilityTensors;

pub const BUNDLE_FORMAT: &str = "firesched-bundle/1";
pub const INSTANCE_FORMAT: &str = "firesched-instance/1";
pub const SCHEDULE_FORMAT: &str = "firesched-schedule/1";

/// Satellites read from a two- or three-line element file, all sharing one budget and
/// starting state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementSource {
    pub path: PathBuf,
    /// km/s
    pub budget: f64,
    /// kJ
    pub battery: f64,
    /// MB
    #[serde(default)]
    pub data: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputLayout {
    pub dir: PathBuf,
}

impl Default for OutputLayout {
    fn default() -> Self {
        OutputLayout {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioBundle {
    pub format: String,
    pub mission: crate::mission::MissionConfig,
    /// Extra satellites appended after `mission.satellites`.
    #[serde(default)]
    pub elements: Option<ElementSource>,
    #[serde(default)]
    pub output: OutputLayout,
}

/// Reads and validates a bundle. Unknown or missing keys are errors naming the key; relative
/// paths are resolved against the bundle's directory and must exist.
pub fn load_bundle(path: &Path) -> Result<ScenarioBundle> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut b: ScenarioBundle = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if b.format != BUNDLE_FORMAT {
        return Err(Error::Format(format!(
            "format `{}` is not `{BUNDLE_FORMAT}`",
            b.format
        )));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| {
        if p.is_relative() {
            base.join(p)
        } else {
            p.to_path_buf()
        }
    };
    if let FireSource::Csv { path: p, .. } = &mut b.mission.fires {
        *p = resolve(p);
        must_exist(p, "mission.fires.path")?;
    }
    if let Some(src) = &mut b.elements {
        src.path = resolve(&src.path);
        must_exist(&src.path, "elements.path")?;
        let text = fs::read_to_string(&src.path).map_err(|e| Error::io(&src.path, e))?;
        for (name, el) in parse_tle(&text)? {
            b.mission.satellites.push(SatelliteConfig {
                name,
                elements: el.circularized()?,
                budget: src.budget,
                data: src.data,
                battery: src.battery,
            });
        }
    }
    b.output.dir = resolve(&b.output.dir);
    b.mission.validate()?;
    Ok(b)
}

fn must_exist(p: &Path, key: &str) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{key}: {} does not exist",
            p.display()
        )))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Instance document; the tensors live in a binary cache next to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    format: String,
    horizon: ScheduleHorizon,
    costs: Vec<ManeuverCostMatrix>,
    resources: ResourceParams,
    downlink_weight: f64,
    aux_weights: Vec<f64>,
    start: Vec<SatelliteStart>,
    variant: Variant,
    /// Relative to the instance file.
    tensors: PathBuf,
}

pub fn write_instance(inst: &ScheduleInstance, path: &Path) -> Result<()> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("instance");
    let cache = PathBuf::from(format!("{stem}.fsvt"));
    let dir = path.parent().unwrap_or(Path::new("."));
    inst.tensors.write_cache(&dir.join(&cache))?;
    write_json(
        path,
        &InstanceFile {
            format: INSTANCE_FORMAT.into(),
            horizon: inst.horizon,
            costs: inst.costs.clone(),
            resources: inst.resources,
            downlink_weight: inst.downlink_weight,
            aux_weights: inst.aux_weights.clone(),
            start: inst.start.clone(),
            variant: inst.variant,
            tensors: cache,
        },
    )
}

pub fn read_instance(path: &Path) -> Result<ScheduleInstance> {
    let f: InstanceFile = read_json(path)?;
    if f.format != INSTANCE_FORMAT {
        return Err(Error::Format(format!(
            "format `{}` is not `{INSTANCE_FORMAT}`",
            f.format
        )));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let tensors = VisibilityTensors::read_cache(&dir.join(&f.tensors))?;
    let inst = ScheduleInstance {
        horizon: f.horizon,
        costs: f.costs,
        tensors,
        resources: f.resources,
        downlink_weight: f.downlink_weight,
        aux_weights: f.aux_weights,
        start: f.start,
        variant: f.variant,
    };
    inst.validate()?;
    Ok(inst)
}

/// One row of the per-Block schedule table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSummary {
    pub z: f64,
    /// MB
    pub data_gathered: f64,
    /// kJ
    pub battery_used: f64,
    /// km/s
    pub provided_budget: f64,
    /// km/s
    pub maneuver_cost: f64,
}

impl ScheduleSummary {
    pub fn of(schedule: &Schedule, inst: &ScheduleInstance) -> Self {
        let r = &inst.resources;
        let h = &inst.horizon;
        let mut s = ScheduleSummary {
            z: schedule.z,
            data_gathered: 0.0,
            battery_used: 0.0,
            provided_budget: inst.costs.iter().map(|c| c.budget).sum(),
            maneuver_cost: 0.0,
        };
        for sat in schedule.satellites.iter().filter(|s| !s.data.is_empty()) {
            let (obs, down) = (sat.observations.len() as f64, sat.downlinks.len() as f64);
            s.data_gathered += r.d_obs * obs;
            s.battery_used += r.b_time * h.steps() as f64
                + r.b_recon * h.stages as f64
                + r.b_obs * obs
                + r.b_comm * down;
            s.maneuver_cost += sat.maneuver_cost;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    pub format: String,
    pub schedule: Schedule,
    pub violations: Vec<Violation>,
    pub summary: ScheduleSummary,
}

impl ScheduleFile {
    pub fn new(schedule: Schedule, violations: Vec<Violation>, inst: &ScheduleInstance) -> Self {
        ScheduleFile {
            format: SCHEDULE_FORMAT.into(),
            summary: ScheduleSummary::of(&schedule, inst),
            schedule,
            violations,
        }
    }
}

/// Minimal CSV writer over `csv`: comma, LF, header first.
struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(header: &[&str]) -> Result<Self> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(header)?;
        Ok(Table { w })
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) -> Result<()> {
        self.w.write_record(cells.into_iter().collect::<Vec<_>>())?;
        Ok(())
    }

    fn save(self, path: &Path) -> Result<()> {
        let bytes = self
            .w
            .into_inner()
            .map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

fn f(v: f64) -> String {
    format!("{v}")
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Reossp => "REOSSP",
        Variant::Eossp => "EOSSP",
    }
}

pub const REPORT_JSON: &str = "report.json";

/// Writes the report tables, JSON snapshots and raster samples into `dir`; returns the files
/// written, sorted.
pub fn emit_report(run: &MissionRun, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = emit_tables(&run.report, dir)?;
    for s in &run.samples {
        let p = dir.join(format!(
            "raster_b{}_k{}_t{}.pgm",
            s.block + 1,
            s.satellite + 1,
            s.step
        ));
        s.raster.write_pgm(&p)?;
        files.push(p.with_extension("pgm.json"));
        files.push(p);
    }
    files.sort();
    Ok(files)
}

/// Everything derived from the JSON report: CSV tables plus registry snapshots.
pub fn emit_tables(report: &MissionReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let mut out = |name: &str| {
        let p = dir.join(name);
        files.push(p.clone());
        p
    };
    let name = variant_name(report.scheduler);
    let eossp = report.scheduler == Variant::Eossp;

    write_json(&out(REPORT_JSON), report)?;
    write_json(&out("registry.json"), &report.registry)?;
    for b in &report.blocks {
        write_json(
            &out(&format!("registry_block_{}.json", b.block + 1)),
            &b.registry,
        )?;
    }

    // per-Block schedule results
    let mut t = Table::new(&[
        "schedule",
        "block",
        "z",
        "data_gathered_gb",
        "battery_used_kj",
        "provided_budget_m_s",
        "maneuver_cost_m_s",
    ])?;
    let budget = |v: f64| if eossp { String::new() } else { f(v * 1000.0) };
    for b in &report.blocks {
        t.row([
            name.to_string(),
            (b.block + 1).to_string(),
            f(b.z),
            f(b.data_gathered / 1000.0),
            f(b.battery_used),
            budget(b.provided_budget),
            budget(b.maneuver_cost),
        ])?;
    }
    let tot = &report.totals;
    let any = !report.blocks.is_empty();
    if any {
        t.row([
            "sum".to_string(),
            String::new(),
            f(tot.z),
            f(tot.data_gathered / 1000.0),
            f(tot.battery_used),
            String::new(),
            budget(tot.maneuver_cost),
        ])?;
    }
    t.save(&out("schedule_results.csv"))?;

    // detection status
    let mut t = Table::new(&[
        "schedule",
        "block",
        "cumulative_fires",
        "detections",
        "true_positives",
        "true_positive_pct",
        "useful_data_gb",
        "data_gathered_gb",
    ])?;
    for b in &report.blocks {
        let pct = if b.priority_targets == 0 {
            String::new()
        } else {
            f(100.0 * b.true_positives as f64 / b.priority_targets as f64)
        };
        t.row([
            name.to_string(),
            (b.block + 1).to_string(),
            b.active_fires.to_string(),
            b.priority_targets.to_string(),
            b.true_positives.to_string(),
            pct,
            f(b.useful_data / 1000.0),
            f(b.data_gathered / 1000.0),
        ])?;
    }
    if any {
        t.row([
            "sum".to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            f(tot.useful_data / 1000.0),
            f(tot.data_gathered / 1000.0),
        ])?;
    }
    t.save(&out("detection_status.csv"))?;

    // summary metrics
    let m = &report.metrics;
    let mut t = Table::new(&["metric", "value"])?;
    let rows: [(&str, String); 13] = [
        ("schedule", name.to_string()),
        ("blocks", report.blocks.len().to_string()),
        ("precision", f(m.precision)),
        ("recall", f(m.recall)),
        ("f_score", f(m.f_score)),
        ("true_positives", m.tp.to_string()),
        ("false_positives", m.fp.to_string()),
        ("false_negatives", m.fn_.to_string()),
        ("z", f(tot.z)),
        ("data_gathered_mb", f(tot.data_gathered)),
        ("useful_data_mb", f(tot.useful_data)),
        ("battery_used_kj", f(tot.battery_used)),
        ("maneuver_cost_km_s", f(tot.maneuver_cost)),
    ];
    for (k, v) in rows.into_iter().filter(|_| any) {
        t.row([k.to_string(), v])?;
    }
    t.save(&out("summary.csv"))?;

    // plot data
    let mut t = Table::new(&[
        "block",
        "satellite",
        "step",
        "time",
        "lat",
        "lon",
        "detections",
    ])?;
    for b in &report.blocks {
        for p in &b.track {
            t.row([
                (b.block + 1).to_string(),
                (p.satellite + 1).to_string(),
                p.step.to_string(),
                p.time.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true),
                f(p.lat),
                f(p.lon),
                p.detections.to_string(),
            ])?;
        }
    }
    t.save(&out("ground_track.csv"))?;

    let mut t = Table::new(&["block", "satellite", "stage", "step", "task", "object"])?;
    for b in &report.blocks {
        for (k, sat) in b.schedule.satellites.iter().enumerate() {
            let mut rows: Vec<(usize, usize, &str, String)> = Vec::new();
            for (s, w) in sat.slots.iter().enumerate() {
                if b.satellites[k].orbits[s]
                    != if s == 0 {
                        b.satellites[k].initial
                    } else {
                        b.satellites[k].orbits[s - 1]
                    }
                {
                    rows.push((s, 0, "maneuver", w.to_string()));
                }
            }
            rows.extend(sat.observations.iter().map(|e| {
                (
                    e.stage,
                    e.step,
                    "observe",
                    b.priority_ids[e.object].to_string(),
                )
            }));
            rows.extend(
                sat.downlinks
                    .iter()
                    .map(|e| (e.stage, e.step, "downlink", e.object.to_string())),
            );
            rows.extend(
                sat.charges
                    .iter()
                    .map(|e| (e.stage, e.step, "charge", String::new())),
            );
            rows.sort();
            for (s, step, task, obj) in rows {
                t.row([
                    (b.block + 1).to_string(),
                    (k + 1).to_string(),
                    s.to_string(),
                    step.to_string(),
                    task.to_string(),
                    obj,
                ])?;
            }
        }
    }
    t.save(&out("gantt.csv"))?;

    let mut t = Table::new(&["block", "satellite", "step", "data_mb", "battery_kj"])?;
    for b in &report.blocks {
        for (k, sat) in b.schedule.satellites.iter().enumerate() {
            for (g, (d, e)) in sat.data.iter().zip(&sat.battery).enumerate() {
                t.row([
                    (b.block + 1).to_string(),
                    (k + 1).to_string(),
                    g.to_string(),
                    f(*d),
                    f(*e),
                ])?;
            }
        }
    }
    t.save(&out("resources.csv"))?;
    files.sort();
    Ok(files)
}

pub fn load_report(dir: &Path) -> Result<MissionReport> {
    read_json(&dir.join(REPORT_JSON))
}

/// Loads a raster written by [`emit_report`].
pub fn load_raster(path: &Path) -> Result<Raster> {
    Raster::read_pgm(path)
}

pub const SCENE_FORMAT: &str = "firesched-scene/1";

/// Ground point, deg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

/// A single overhead view with a hand-placed scene, used for detector regressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFixture {
    pub format: String,
    pub name: String,
    pub time: Epoch,
    pub subpoint: LatLon,
    /// km
    pub altitude: f64,
    /// deg; the pass is ascending
    pub inclination: f64,
    #[serde(default)]
    pub fusion: FusionMode,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub profile: DetectorProfile,
    #[serde(default = "default_iou")]
    pub late_fusion_iou: f64,
    pub scene: Scene,
}

fn default_iou() -> f64 {
    0.55
}

impl SceneFixture {
    pub fn frame(&self) -> EarthFrame {
        EarthFrame::from_gmst(self.time)
    }

    /// Circular-orbit state directly above the subpoint.
    pub fn state(&self) -> Result<StateVector> {
        if !(self.altitude > 0.0) {
            return Err(Error::invalid(format!(
                "altitude {} must be positive",
                self.altitude
            )));
        }
        let LatLon { lat, lon } = self.subpoint;
        let frame = self.frame();
        let cos_lat = lat.to_radians().cos();
        let sin_az = self.inclination.to_radians().cos() / cos_lat;
        if !(sin_az.abs() <= 1.0) {
            return Err(Error::invalid(format!(
                "inclination {} never reaches latitude {lat}",
                self.inclination
            )));
        }
        let az = sin_az.asin();
        let up = frame.ground_unit_vector(lat, lon, self.time);
        let lam = (lon + frame.greenwich_angle(self.time)).to_radians();
        let (sl, cl) = lat.to_radians().sin_cos();
        let north = Vector3::new(-sl * lam.cos(), -sl * lam.sin(), cl);
        let east = Vector3::new(-lam.sin(), lam.cos(), 0.0);
        let r = EARTH_RADIUS + self.altitude;
        let v = (MU_EARTH / r).sqrt();
        Ok(StateVector {
            position: up * r,
            velocity: (north * az.cos() + east * az.sin()) * v,
            time: self.time,
        })
    }

    pub fn rasters(&self) -> Result<Vec<Raster>> {
        view_rasters(
            &self.state()?,
            &self.scene,
            &self.frame(),
            &self.render,
            self.fusion,
            0,
        )
    }

    /// Geolocated detections, most confident first.
    pub fn detections(&self) -> Result<Vec<Detection>> {
        let rasters = self.rasters()?;
        let r = &rasters[0];
        detect_view(&rasters, self.fusion, &self.profile, self.late_fusion_iou)?
            .into_iter()
            .map(|b| Detection::from_box(b, &r.meta, r.width, r.height))
            .collect()
    }
}

pub fn load_scene_fixture(path: &Path) -> Result<SceneFixture> {
    let fx: SceneFixture = read_json(path)?;
    if fx.format != SCENE_FORMAT {
        return Err(Error::Format(format!(
            "format `{}` is not `{SCENE_FORMAT}`",
            fx.format
        )));
    }
    fx.profile.validate()?;
    Ok(fx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::{
        random_instance, solve_exact, validate_schedule, RandomSpec, SolveOptions,
    };

    #[test]
    fn instance_and_schedule_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let inst = random_instance(5, &RandomSpec::default()).unwrap();
        let p = dir.path().join("inst.json");
        write_instance(&inst, &p).unwrap();
        assert!(dir.path().join("inst.fsvt").exists());
        assert_eq!(read_instance(&p).unwrap(), inst);

        let s = solve_exact(&inst, &SolveOptions::default()).unwrap();
        let file = ScheduleFile::new(s.clone(), validate_schedule(&s, &inst), &inst);
        let q = dir.path().join("sched.json");
        write_json(&q, &file).unwrap();
        let back: ScheduleFile = read_json(&q).unwrap();
        assert_eq!(back, file);
        assert!(back.violations.is_empty());
    }

    #[test]
    fn awkward_floats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        let v: Vec<f64> = vec![
            0.1 + 0.2,
            1.0 / 3.0,
            5e-324,
            1.7976931348623157e308,
            -0.0,
            123456.789e-17,
        ];
        write_json(&p, &v).unwrap();
        let back: Vec<f64> = read_json(&p).unwrap();
        for (a, b) in v.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn instance_format_tag_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let inst = random_instance(1, &RandomSpec::default()).unwrap();
        let p = dir.path().join("inst.json");
        write_instance(&inst, &p).unwrap();
        let text = fs::read_to_string(&p)
            .unwrap()
            .replace(INSTANCE_FORMAT, "other/9");
        fs::write(&p, text).unwrap();
        assert!(matches!(read_instance(&p), Err(Error::Format(_))));
    }
}
