//! The Block loop: passive imaging, detection, registry update, responsive rescheduling and
//! scheduling of the next Block.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::time::Duration;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::confidence::{RegistryParams, TargetRegistry};
use crate::detect::{
    angular_distance, detect_blobs, early_fuse, late_fuse, match_detections, BoundingBox,
    Detection, DetectionMetrics, DetectorProfile,
};
use crate::error::{Error, Result};
use crate::orbit::{
    build_slot_grid, propagate, EarthFrame, ManeuverCostMatrix, OrbitalElements, SlotGrid,
    K_REV_MAX,
};
use crate::par::Execution;
use crate::scene::{
    fires_near_track, ingest_fires_from_reader, render, Band, ClutterFeature, FireTruth,
    IngestConfig, Raster, RenderConfig, Scene,
};
use crate::scheduler::{
    build_instance, reschedule_remainder, solve_exact, InstanceParts, ResourceParams,
    SatelliteStart, Schedule, ScheduleHorizon, ScheduleInstance, SolveOptions, SolverStatus,
    Variant,
};
use crate::time::{add_seconds, Epoch};
use crate::visibility::{compute_tensors, GroundPoint, PointKind, PointSets, VisibilityConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Band6,
    Band7,
    #[default]
    Early,
    Late,
}

impl FusionMode {
    pub fn default_profile(self) -> DetectorProfile {
        match self {
            FusionMode::Band6 => DetectorProfile::band6(),
            FusionMode::Band7 => DetectorProfile::band7(),
            FusionMode::Early => DetectorProfile::early_fusion(),
            FusionMode::Late => DetectorProfile::late_fusion(),
        }
    }
}

/// When mid-Block promotions trigger a re-solve of the remaining steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescheduleCadence {
    Never,
    /// Once per time step in which at least one target was promoted.
    OnPromotion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatelliteConfig {
    pub name: String,
    pub elements: OrbitalElements,
    /// Mission-long maneuver budget, km/s.
    pub budget: f64,
    /// MB
    #[serde(default)]
    pub data: f64,
    /// kJ
    pub battery: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FireSource {
    /// Hotspot CSV; a relative path is resolved against the bundle's directory at load.
    Csv {
        path: PathBuf,
        #[serde(default)]
        ingest: IngestConfig,
        /// Earliest acquisition kept; defaults to the mission start.
        #[serde(default)]
        since: Option<Epoch>,
    },
    /// Fires scattered near the satellites' ground tracks, drawn from the mission seed.
    Synthetic {
        count: usize,
        /// deg
        max_offset: f64,
        /// Fires may ignite this many seconds before the mission starts.
        #[serde(default)]
        ignite_before: f64,
    },
    Inline {
        fires: Vec<FireTruth>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_planes: usize,
    pub n_anomaly: usize,
    pub k_rev_max: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n_planes: 5,
            n_anomaly: 15,
            k_rev_max: K_REV_MAX,
        }
    }
}

fn default_fusion() -> FusionMode {
    FusionMode::Early
}

fn default_variant() -> Variant {
    Variant::Reossp
}

fn default_downlink_weight() -> f64 {
    5.0
}

fn default_iou() -> f64 {
    0.55
}

fn default_match_radius() -> f64 {
    0.5
}

fn default_state_cap() -> usize {
    1 << 22
}

fn default_samples() -> usize {
    2
}

fn default_cadence() -> RescheduleCadence {
    RescheduleCadence::OnPromotion
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    pub start: Epoch,
    pub n_blocks: usize,
    /// s
    pub block_duration: f64,
    /// s
    pub step: f64,
    /// Stages per Block.
    pub stages: usize,
    pub satellites: Vec<SatelliteConfig>,
    pub ground_stations: Vec<GroundPoint>,
    pub fires: FireSource,
    #[serde(default)]
    pub clutter: Vec<ClutterFeature>,
    /// Overrides the fusion mode's default profile.
    #[serde(default)]
    pub detector: Option<DetectorProfile>,
    #[serde(default = "default_fusion")]
    pub fusion: FusionMode,
    #[serde(default = "default_variant")]
    pub scheduler: Variant,
    pub seed: u64,
    #[serde(default)]
    pub resources: ResourceParams,
    #[serde(default = "default_downlink_weight")]
    pub downlink_weight: f64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub visibility: VisibilityConfig,
    /// The render seed is replaced by `seed`.
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub registry: RegistryParams,
    #[serde(default = "default_iou")]
    pub late_fusion_iou: f64,
    /// Truth-matching radius for useful data and metrics, deg.
    #[serde(default = "default_match_radius")]
    pub match_radius: f64,
    #[serde(default = "default_cadence")]
    pub reschedule: RescheduleCadence,
    /// Wall-clock cap per solve, s.
    #[serde(default)]
    pub time_limit: Option<f64>,
    #[serde(default = "default_state_cap")]
    pub state_cap: usize,
    #[serde(default)]
    pub execution: Execution,
    /// Rasters kept per Block for the report.
    #[serde(default = "default_samples")]
    pub raster_samples: usize,
}

impl MissionConfig {
    pub fn horizon(&self) -> Result<ScheduleHorizon> {
        ScheduleHorizon::from_duration(self.block_duration, self.step, self.stages)
    }

    pub fn profile(&self) -> DetectorProfile {
        self.detector
            .unwrap_or_else(|| self.fusion.default_profile())
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            time_limit: self.time_limit.map(Duration::from_secs_f64),
            state_cap: self.state_cap,
            execution: self.execution,
        }
    }

    pub fn end(&self) -> Epoch {
        add_seconds(self.start, self.n_blocks as f64 * self.block_duration)
    }

    pub fn validate(&self) -> Result<()> {
        self.horizon()?;
        if self.satellites.is_empty() {
            return Err(Error::invalid("mission has no satellites"));
        }
        for s in &self.satellites {
            s.elements.validate()?;
            if s.elements.eccentricity > 1e-9 {
                return Err(Error::invalid(format!(
                    "satellite {} must start on a circular orbit (eccentricity {})",
                    s.name, s.elements.eccentricity
                )));
            }
            if !(s.budget >= 0.0) {
                return Err(Error::invalid(format!(
                    "satellite {} budget {} must be non-negative",
                    s.name, s.budget
                )));
            }
        }
        for g in &self.ground_stations {
            GroundPoint::new(g.id.clone(), g.lat, g.lon, g.kind)?;
        }
        self.resources.validate()?;
        self.profile().validate()?;
        if !(self.downlink_weight > 1.0) {
            return Err(Error::invalid(format!(
                "downlink weight {} must exceed 1",
                self.downlink_weight
            )));
        }
        let r = &self.registry;
        if !(r.promotion_threshold > 0.0 && r.promotion_threshold < 1.0) {
            return Err(Error::invalid(format!(
                "promotion threshold {} outside (0, 1)",
                r.promotion_threshold
            )));
        }
        if !(self.late_fusion_iou > 0.0 && self.late_fusion_iou < 1.0) {
            return Err(Error::invalid(format!(
                "late fusion IoU {} outside (0, 1)",
                self.late_fusion_iou
            )));
        }
        if !(self.match_radius > 0.0) {
            return Err(Error::invalid("match radius must be positive"));
        }
        if self.render.pixels == 0 {
            return Err(Error::invalid("render size must be positive"));
        }
        if let Some(t) = self.time_limit {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::invalid(format!("time limit {t} s must be positive")));
            }
        }
        if let FireSource::Synthetic {
            max_offset,
            ignite_before,
            ..
        } = self.fires
        {
            if !(max_offset >= 0.0) || !(ignite_before >= 0.0) {
                return Err(Error::invalid(
                    "synthetic fire offsets must be non-negative",
                ));
            }
        }
        Ok(())
    }

    /// Ground-truth fires named by the config.
    pub fn load_fires(&self, frame: &EarthFrame) -> Result<Vec<FireTruth>> {
        match &self.fires {
            FireSource::Inline { fires } => Ok(fires.clone()),
            FireSource::Csv {
                path,
                ingest,
                since,
            } => {
                let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
                ingest_fires_from_reader(f, since.unwrap_or(self.start), self.end(), ingest)
            }
            FireSource::Synthetic {
                count,
                max_offset,
                ignite_before,
            } => {
                let n_sat = self.satellites.len();
                let span = self.n_blocks as f64 * self.block_duration;
                let from = add_seconds(self.start, -ignite_before);
                let mut out = Vec::with_capacity(*count);
                for (k, sat) in self.satellites.iter().enumerate() {
                    let n = count / n_sat + usize::from(k < count % n_sat);
                    let seed = self.seed ^ (0x5eed_0000 + k as u64);
                    out.extend(fires_near_track(
                        &sat.elements,
                        frame,
                        self.start,
                        span,
                        from,
                        n,
                        *max_offset,
                        seed,
                    )?);
                }
                for (i, f) in out.iter_mut().enumerate() {
                    f.id = i as u64;
                }
                Ok(out)
            }
        }
    }
}

/// Carried state of one satellite at a Block boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatelliteState {
    /// Orbit occupied at the Block start, with its epoch set to the Block start.
    pub elements: OrbitalElements,
    pub data: f64,
    pub battery: f64,
    /// Unspent mission budget, km/s.
    pub budget_remaining: f64,
}

#[derive(Debug, Clone)]
struct Parcel {
    target: Option<u64>,
    block: usize,
    mb: f64,
}

/// A Block's instance together with the bookkeeping needed to execute and reschedule it.
#[derive(Debug, Clone)]
struct Plan {
    grids: Vec<SlotGrid>,
    instance: ScheduleInstance,
    schedule: Schedule,
    /// Registry id of every priority index in the instance.
    priority_ids: Vec<u64>,
    provided: Vec<f64>,
    passive: bool,
    warnings: Vec<String>,
}

/// Everything carried from one Block to the next.
#[derive(Debug, Clone)]
pub struct MissionState {
    pub block: usize,
    pub block_start: Epoch,
    pub satellites: Vec<SatelliteState>,
    pub registry: TargetRegistry,
    pub fires: Vec<FireTruth>,
    pub frame: EarthFrame,
    scene: Scene,
    plan: Option<Plan>,
    queues: Vec<VecDeque<Parcel>>,
    /// Useful MB credited back to the Block the data was gathered in.
    useful: Vec<f64>,
}

impl MissionState {
    pub fn new(cfg: &MissionConfig) -> Result<Self> {
        cfg.validate()?;
        let frame = EarthFrame::from_gmst(cfg.start);
        let fires = cfg.load_fires(&frame)?;
        Self::with_fires(cfg, fires)
    }

    pub fn with_fires(cfg: &MissionConfig, fires: Vec<FireTruth>) -> Result<Self> {
        cfg.validate()?;
        let frame = EarthFrame::from_gmst(cfg.start);
        let satellites = cfg
            .satellites
            .iter()
            .map(|s| {
                Ok(SatelliteState {
                    elements: s.elements.advance_to(cfg.start)?,
                    data: s.data,
                    battery: s.battery,
                    budget_remaining: s.budget,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let queues = cfg
            .satellites
            .iter()
            .map(|s| {
                let mut q = VecDeque::new();
                if s.data > 0.0 {
                    q.push_back(Parcel {
                        target: None,
                        block: 0,
                        mb: s.data,
                    });
                }
                q
            })
            .collect();
        Ok(MissionState {
            block: 0,
            block_start: cfg.start,
            satellites,
            registry: TargetRegistry::new(cfg.registry),
            scene: Scene {
                fires: fires.clone(),
                clutter: cfg.clutter.clone(),
            },
            fires,
            frame,
            plan: None,
            queues,
            useful: Vec::new(),
        })
    }

    fn is_true_target(&self, id: u64, radius: f64) -> bool {
        self.registry.get(id).is_some_and(|t| {
            self.fires
                .iter()
                .any(|f| angular_distance(t.lat, t.lon, f.lat, f.lon) <= radius)
        })
    }
}

/// Per-satellite summary of one Block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatelliteBlock {
    /// Orbit held at the Block start, before any maneuver.
    pub initial: OrbitalElements,
    pub slots: Vec<usize>,
    /// Orbit of every stage's slot.
    pub orbits: Vec<OrbitalElements>,
    pub start_data: f64,
    pub start_battery: f64,
    pub end_data: f64,
    pub end_battery: f64,
    pub observations: usize,
    pub downlinks: usize,
    pub charges: usize,
    /// kJ consumed, charging excluded.
    pub battery_used: f64,
    /// km/s
    pub maneuver_cost: f64,
    /// km/s
    pub provided_budget: f64,
    pub status: SolverStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub satellite: usize,
    pub step: usize,
    pub time: Epoch,
    pub lat: f64,
    pub lon: f64,
    pub detections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockResult {
    pub block: usize,
    pub start: Epoch,
    pub schedule: Schedule,
    /// Objective of the schedule as first solved, before any rescheduling.
    pub planned_z: f64,
    pub z: f64,
    /// Geolocated detections over all passive images.
    pub detections: usize,
    pub new_targets: usize,
    pub promotions: usize,
    /// Priority set size at the end of the Block.
    pub priority_targets: usize,
    /// Priority targets within the match radius of a real fire.
    pub true_positives: usize,
    /// Fires ignited by the Block's end.
    pub active_fires: usize,
    pub reschedules: usize,
    /// Registry id behind every priority index of the executed instance.
    pub priority_ids: Vec<u64>,
    pub registry: TargetRegistry,
    /// MB
    pub data_gathered: f64,
    /// MB of this Block's observations later downlinked for a true-positive target.
    pub useful_data: f64,
    /// kJ
    pub battery_used: f64,
    /// km/s
    pub maneuver_cost: f64,
    /// km/s
    pub provided_budget: f64,
    pub satellites: Vec<SatelliteBlock>,
    pub track: Vec<TrackPoint>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub z: f64,
    pub data_gathered: f64,
    pub useful_data: f64,
    pub battery_used: f64,
    pub maneuver_cost: f64,
    pub detections: usize,
    pub reschedules: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionReport {
    pub scheduler: Variant,
    pub fusion: FusionMode,
    pub blocks: Vec<BlockResult>,
    pub registry: TargetRegistry,
    /// Final priority set scored one-to-one against fires ignited before the mission end.
    pub metrics: DetectionMetrics,
    pub totals: Totals,
    pub fires: Vec<FireTruth>,
    pub final_states: Vec<SatelliteState>,
}

/// A passive image kept for the report.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterSample {
    pub block: usize,
    pub satellite: usize,
    pub step: usize,
    pub raster: Raster,
}

#[derive(Debug, Clone)]
pub struct MissionRun {
    pub report: MissionReport,
    pub samples: Vec<RasterSample>,
}

/// Passive images per orbital period at step `step`: floor(period / step).
pub fn passive_cadence_check(elements: &OrbitalElements, step: f64) -> Result<u64> {
    elements.validate()?;
    if !(step > 0.0) {
        return Err(Error::invalid(format!("step {step} must be positive")));
    }
    Ok((elements.period() / step * (1.0 + 1e-12)).floor() as u64)
}

/// Rasters the fusion mode looks at: one band, the early-fused image, or both bands for late
/// fusion.
pub fn view_rasters(
    state: &crate::orbit::StateVector,
    scene: &Scene,
    frame: &EarthFrame,
    cfg: &RenderConfig,
    fusion: FusionMode,
    satellite: usize,
) -> Result<Vec<Raster>> {
    let one = |band| render(state, scene, band, frame, cfg, satellite);
    Ok(match fusion {
        FusionMode::Band6 => vec![one(Band::Band6)?],
        FusionMode::Band7 => vec![one(Band::Band7)?],
        FusionMode::Early => {
            let (b6, b7) = (one(Band::Band6)?, one(Band::Band7)?);
            vec![early_fuse(&[&b6, &b7])?.0]
        }
        FusionMode::Late => vec![one(Band::Band6)?, one(Band::Band7)?],
    })
}

/// Boxes found in the rasters returned by [`view_rasters`].
pub fn detect_view(
    rasters: &[Raster],
    fusion: FusionMode,
    profile: &DetectorProfile,
    iou_threshold: f64,
) -> Result<Vec<BoundingBox>> {
    match fusion {
        FusionMode::Late => {
            let boxes: Vec<BoundingBox> = rasters
                .iter()
                .enumerate()
                .flat_map(|(i, r)| {
                    detect_blobs(r, profile)
                        .into_iter()
                        .map(move |b| BoundingBox {
                            source_model: i as u32 + 1,
                            ..b
                        })
                })
                .collect();
            late_fuse(&boxes, rasters.len() as u32, iou_threshold)
        }
        _ => {
            let r = rasters
                .first()
                .ok_or_else(|| Error::invalid("no raster to detect on"))?;
            Ok(detect_blobs(r, profile))
        }
    }
}

fn budget_offer(remaining: f64, block: usize, n_blocks: usize) -> f64 {
    if block + 1 >= n_blocks {
        remaining
    } else {
        remaining / 2.0
    }
}

fn points_of(registry: &TargetRegistry, ids: &[u64], kind: PointKind) -> Result<Vec<GroundPoint>> {
    ids.iter()
        .map(|&id| {
            let t = registry
                .get(id)
                .ok_or_else(|| Error::invalid(format!("unknown target {id}")))?;
            GroundPoint::new(format!("target-{id}"), t.lat, t.lon, kind)
        })
        .collect()
}

fn build_plan(state: &MissionState, cfg: &MissionConfig) -> Result<Plan> {
    let h = cfg.horizon()?;
    let passive = state.block == 0;
    let mut provided = Vec::new();
    let mut grids = Vec::new();
    let mut costs = Vec::new();
    for sat in &state.satellites {
        let offer = match cfg.scheduler {
            Variant::Eossp => 0.0,
            Variant::Reossp => budget_offer(sat.budget_remaining, state.block, cfg.n_blocks),
        };
        let grid = if passive || cfg.scheduler == Variant::Eossp {
            SlotGrid::stay_put(sat.elements)
        } else {
            build_slot_grid(&sat.elements, offer, cfg.grid.n_planes, cfg.grid.n_anomaly)?
        };
        let usable = if passive { 0.0 } else { offer };
        costs.push(ManeuverCostMatrix::for_grid(
            &grid,
            h.stages,
            usable,
            cfg.grid.k_rev_max,
        )?);
        grids.push(grid);
        provided.push(offer);
    }
    let (priority_ids, aux): (Vec<u64>, Vec<(u64, f64)>) = if passive {
        (Vec::new(), Vec::new())
    } else {
        (
            state.registry.priority.clone(),
            state
                .registry
                .select_auxiliary()
                .into_iter()
                .map(|(t, w)| (t.id, w))
                .collect(),
        )
    };
    let priority = points_of(&state.registry, &priority_ids, PointKind::PriorityTarget)?;
    let aux_ids: Vec<u64> = aux.iter().map(|a| a.0).collect();
    let auxiliary = points_of(&state.registry, &aux_ids, PointKind::AuxiliaryTarget)?;
    // the first Block only images and charges, so it sees no stations either
    let stations: &[GroundPoint] = if passive { &[] } else { &cfg.ground_stations };
    let tensors = compute_tensors(
        &grids,
        &h,
        state.block_start,
        PointSets {
            priority: &priority,
            auxiliary: &auxiliary,
            stations,
        },
        &state.frame,
        &cfg.visibility,
        cfg.execution,
    )?;
    let instance = build_instance(
        InstanceParts {
            horizon: h,
            costs,
            tensors,
            resources: cfg.resources,
            downlink_weight: cfg.downlink_weight,
            aux_weights: aux.iter().map(|a| a.1).collect(),
            start: state
                .satellites
                .iter()
                .map(|s| SatelliteStart {
                    data: s.data,
                    battery: s.battery,
                })
                .collect(),
        },
        cfg.scheduler,
    )?;
    let schedule = solve_exact(&instance, &cfg.solve_options())?;
    let mut warnings = Vec::new();
    note_status(&schedule, state.block, "schedule", &mut warnings);
    Ok(Plan {
        grids,
        instance,
        schedule,
        priority_ids,
        provided,
        passive,
        warnings,
    })
}

/// Scheduling instance for the first Block with every fire burning at the start as a priority
/// target and no auxiliary targets. Useful for studying the scheduler on its own.
pub fn truth_instance(cfg: &MissionConfig) -> Result<ScheduleInstance> {
    cfg.validate()?;
    let h = cfg.horizon()?;
    let frame = EarthFrame::from_gmst(cfg.start);
    let mut grids = Vec::new();
    let mut costs = Vec::new();
    for sat in &cfg.satellites {
        let elements = sat.elements.advance_to(cfg.start)?;
        let (grid, offer) = match cfg.scheduler {
            Variant::Eossp => (SlotGrid::stay_put(elements), 0.0),
            Variant::Reossp => {
                let offer = budget_offer(sat.budget, 0, cfg.n_blocks);
                (
                    build_slot_grid(&elements, offer, cfg.grid.n_planes, cfg.grid.n_anomaly)?,
                    offer,
                )
            }
        };
        costs.push(ManeuverCostMatrix::for_grid(
            &grid,
            h.stages,
            offer,
            cfg.grid.k_rev_max,
        )?);
        grids.push(grid);
    }
    let priority = cfg
        .load_fires(&frame)?
        .into_iter()
        .filter(|f| f.active_at(cfg.start))
        .map(|f| {
            GroundPoint::new(
                format!("fire-{}", f.id),
                f.lat,
                crate::orbit::wrap_180(f.lon),
                PointKind::PriorityTarget,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let tensors = compute_tensors(
        &grids,
        &h,
        cfg.start,
        PointSets {
            priority: &priority,
            auxiliary: &[],
            stations: &cfg.ground_stations,
        },
        &frame,
        &cfg.visibility,
        cfg.execution,
    )?;
    build_instance(
        InstanceParts {
            horizon: h,
            costs,
            tensors,
            resources: cfg.resources,
            downlink_weight: cfg.downlink_weight,
            aux_weights: Vec::new(),
            start: cfg
                .satellites
                .iter()
                .map(|s| SatelliteStart {
                    data: s.data,
                    battery: s.battery,
                })
                .collect(),
        },
        cfg.scheduler,
    )
}

fn note_status(schedule: &Schedule, block: usize, what: &str, warnings: &mut Vec<String>) {
    for (k, s) in schedule.satellites.iter().enumerate() {
        let msg = match s.status {
            SolverStatus::Optimal => continue,
            SolverStatus::FeasibleTimeout => format!(
                "block {block} satellite {k}: {what} hit the time limit; using the incumbent"
            ),
            SolverStatus::Infeasible => {
                format!("block {block} satellite {k}: {what} is infeasible; satellite idles")
            }
        };
        warn!("{msg}");
        warnings.push(msg);
    }
}

struct Frame {
    satellite: usize,
    step: usize,
    lat: f64,
    lon: f64,
    detections: Vec<Detection>,
}

/// Executes one Block (Phases 1 to 4) and advances `state` to the next Block.
pub fn run_block(state: &mut MissionState, cfg: &MissionConfig) -> Result<BlockResult> {
    let h = cfg.horizon()?;
    let mut plan = match state.plan.take() {
        Some(p) => p,
        None => build_plan(state, cfg)?,
    };
    let block = state.block;
    let n_sat = state.satellites.len();
    let n_steps = h.steps();
    let profile = cfg.profile();
    let render_cfg = RenderConfig {
        seed: cfg.seed,
        ..cfg.render
    };

    // Phase 1 and 2: fly the committed slot path, image every step, detect
    let slot_of = |plan: &Plan, k: usize, g: usize| -> OrbitalElements {
        let s = g / h.steps_per_stage;
        plan.grids[k].slots[plan.schedule.satellites[k].slots[s]]
    };
    let state_at = |plan: &Plan, k: usize, g: usize| {
        propagate(
            &slot_of(plan, k, g),
            add_seconds(state.block_start, g as f64 * h.step),
        )
    };
    let frames = cfg
        .execution
        .try_map(n_sat * n_steps, |n| -> Result<Frame> {
            let (k, g) = (n / n_steps, n % n_steps);
            let st = state_at(&plan, k, g)?;
            let rasters =
                view_rasters(&st, &state.scene, &state.frame, &render_cfg, cfg.fusion, k)?;
            let boxes = detect_view(&rasters, cfg.fusion, &profile, cfg.late_fusion_iou)?;
            let r = &rasters[0];
            let detections = boxes
                .into_iter()
                .map(|b| Detection::from_box(b, &r.meta, r.width, r.height))
                .collect::<Result<Vec<_>>>()?;
            Ok(Frame {
                satellite: k,
                step: g,
                lat: r.meta.lat0,
                lon: r.meta.lon0,
                detections,
            })
        })?;

    // Phase 3: registry updates in time order, rescheduling after each promoting step
    let mut order: Vec<usize> = (0..frames.len()).collect();
    order.sort_by_key(|&i| (frames[i].step, frames[i].satellite));
    let mut new_targets = 0;
    let mut promotions = 0;
    let mut reschedules = 0;
    let mut detections = 0;
    let mut warnings = std::mem::take(&mut plan.warnings);
    let planned_z = plan.schedule.z;
    let mut i = 0;
    while i < order.len() {
        let g = frames[order[i]].step;
        let mut promoted = Vec::new();
        while i < order.len() && frames[order[i]].step == g {
            for det in &frames[order[i]].detections {
                let reg = state.registry.register_detection(det, &profile)?;
                detections += 1;
                new_targets += usize::from(reg.created);
                if reg.promoted {
                    promoted.push(reg.target_id);
                }
            }
            i += 1;
        }
        promotions += promoted.len();
        let t_now = g + 1;
        if promoted.is_empty()
            || plan.passive
            || cfg.reschedule == RescheduleCadence::Never
            || t_now >= n_steps
        {
            continue;
        }
        let points = points_of(&state.registry, &promoted, PointKind::PriorityTarget)?;
        let extra = compute_tensors(
            &plan.grids,
            &h,
            state.block_start,
            PointSets {
                priority: &points,
                ..PointSets::default()
            },
            &state.frame,
            &cfg.visibility,
            cfg.execution,
        )?;
        plan.instance.tensors.append_priority(&extra)?;
        plan.priority_ids.extend(promoted);
        plan.schedule =
            reschedule_remainder(&plan.schedule, &plan.instance, t_now, &cfg.solve_options())?;
        note_status(&plan.schedule, block, "reschedule", &mut warnings);
        reschedules += 1;
    }

    // bookkeeping for the executed schedule
    let r = cfg.resources;
    let mut sats = Vec::with_capacity(n_sat);
    for (k, sat) in plan.schedule.satellites.iter().enumerate() {
        let start = state.satellites[k];
        let feasible = sat.status != SolverStatus::Infeasible;
        let (end_data, end_battery) = if feasible {
            sat.final_levels(&h, &r)
                .ok_or_else(|| Error::invalid("executed schedule has no trajectory"))?
        } else {
            (start.data, start.battery)
        };
        let (obs, down, ch) = (
            sat.observations.len(),
            sat.downlinks.len(),
            sat.charges.len(),
        );
        let battery_used = if feasible {
            r.b_time * n_steps as f64
                + r.b_recon * h.stages as f64
                + r.b_obs * obs as f64
                + r.b_comm * down as f64
        } else {
            0.0
        };
        sats.push(SatelliteBlock {
            initial: plan.grids[k].initial,
            orbits: sat.slots.iter().map(|&j| plan.grids[k].slots[j]).collect(),
            slots: sat.slots.clone(),
            start_data: start.data,
            start_battery: start.battery,
            end_data,
            end_battery,
            observations: obs,
            downlinks: down,
            charges: ch,
            battery_used,
            maneuver_cost: sat.maneuver_cost,
            provided_budget: plan.provided[k],
            status: sat.status,
        });
    }

    // useful data: downlinks drain the oldest gathered data first
    if state.useful.len() <= block {
        state.useful.resize(block + 1, 0.0);
    }
    let true_ids: Vec<u64> = plan
        .priority_ids
        .iter()
        .copied()
        .filter(|&id| state.is_true_target(id, cfg.match_radius))
        .collect();
    for (k, sat) in plan.schedule.satellites.iter().enumerate() {
        let mut events: Vec<(usize, bool, usize)> = sat
            .observations
            .iter()
            .map(|e| (e.stage * h.steps_per_stage + e.step, true, e.object))
            .chain(
                sat.downlinks
                    .iter()
                    .map(|e| (e.stage * h.steps_per_stage + e.step, false, e.object)),
            )
            .collect();
        events.sort();
        for (_, is_obs, object) in events {
            if is_obs {
                state.queues[k].push_back(Parcel {
                    target: Some(plan.priority_ids[object]),
                    block,
                    mb: r.d_obs,
                });
                continue;
            }
            let mut left = r.d_comm;
            while left > 0.0 {
                let Some(front) = state.queues[k].front_mut() else {
                    break;
                };
                let take = front.mb.min(left);
                if front.target.is_some_and(|id| true_ids.contains(&id)) {
                    state.useful[front.block] += take;
                }
                front.mb -= take;
                left -= take;
                if front.mb <= 0.0 {
                    state.queues[k].pop_front();
                }
            }
        }
    }

    let track = frames
        .iter()
        .map(|f| TrackPoint {
            satellite: f.satellite,
            step: f.step,
            time: add_seconds(state.block_start, f.step as f64 * h.step),
            lat: f.lat,
            lon: f.lon,
            detections: f.detections.len(),
        })
        .collect();
    let block_end = add_seconds(state.block_start, h.duration());
    let true_positives = state
        .registry
        .priority
        .iter()
        .filter(|&&id| state.is_true_target(id, cfg.match_radius))
        .count();
    let result = BlockResult {
        block,
        start: state.block_start,
        planned_z,
        z: plan.schedule.z,
        detections,
        new_targets,
        promotions,
        priority_targets: state.registry.priority.len(),
        true_positives,
        active_fires: state
            .fires
            .iter()
            .filter(|f| f.start_time <= block_end)
            .count(),
        reschedules,
        priority_ids: plan.priority_ids.clone(),
        registry: state.registry.clone(),
        data_gathered: sats.iter().map(|s| s.observations as f64 * r.d_obs).sum(),
        useful_data: state.useful[block],
        battery_used: sats.iter().map(|s| s.battery_used).sum(),
        maneuver_cost: sats.iter().map(|s| s.maneuver_cost).sum(),
        provided_budget: sats.iter().map(|s| s.provided_budget).sum(),
        satellites: sats,
        track,
        warnings,
        schedule: plan.schedule.clone(),
    };

    // Phase 4: carry the end-of-Block state over and plan the next Block
    for (k, s) in state.satellites.iter_mut().enumerate() {
        let sb = &result.satellites[k];
        let last = *sb
            .orbits
            .last()
            .ok_or_else(|| Error::invalid("schedule has no stages"))?;
        s.elements = last.advance_to(block_end)?;
        s.data = sb.end_data;
        s.battery = sb.end_battery;
        s.budget_remaining = (s.budget_remaining - sb.maneuver_cost).max(0.0);
    }
    state.block += 1;
    state.block_start = block_end;
    if state.block < cfg.n_blocks {
        state.plan = Some(build_plan(state, cfg)?);
    }
    Ok(result)
}

impl MissionState {
    /// Useful MB credited so far to each Block.
    pub fn useful_by_block(&self) -> &[f64] {
        &self.useful
    }
}

/// Runs every Block and collects the report, keeping up to `raster_samples` images per Block.
pub fn run_mission(cfg: &MissionConfig) -> Result<MissionRun> {
    let state = MissionState::new(cfg)?;
    run_mission_from(state, cfg)
}

pub fn run_mission_from(mut state: MissionState, cfg: &MissionConfig) -> Result<MissionRun> {
    let mut blocks = Vec::with_capacity(cfg.n_blocks);
    let mut samples = Vec::new();
    for _ in 0..cfg.n_blocks {
        let res = run_block(&mut state, cfg)?;
        samples.extend(pick_samples(&state, cfg, &res)?);
        info!(
            "block {}: z {}, {} detections, {} priority targets, {} promotions",
            res.block + 1,
            res.z,
            res.detections,
            res.priority_targets,
            res.promotions
        );
        blocks.push(res);
    }
    for b in &mut blocks {
        b.useful_data = state.useful.get(b.block).copied().unwrap_or(0.0);
    }
    let end = cfg.end();
    let truth: Vec<FireTruth> = state
        .fires
        .iter()
        .filter(|f| f.start_time <= end)
        .cloned()
        .collect();
    let points: Vec<(f64, f64)> = state
        .registry
        .priority_targets()
        .map(|t| (t.lat, t.lon))
        .collect();
    let tp = match_detections(points.iter().copied(), &truth, cfg.match_radius)?.len();
    let metrics = DetectionMetrics::from_counts(tp, points.len() - tp, truth.len() - tp);
    let totals = Totals {
        z: blocks.iter().map(|b| b.z).sum(),
        data_gathered: blocks.iter().map(|b| b.data_gathered).sum(),
        useful_data: blocks.iter().map(|b| b.useful_data).sum(),
        battery_used: blocks.iter().map(|b| b.battery_used).sum(),
        maneuver_cost: blocks.iter().map(|b| b.maneuver_cost).sum(),
        detections: blocks.iter().map(|b| b.detections).sum(),
        reschedules: blocks.iter().map(|b| b.reschedules).sum(),
    };
    Ok(MissionRun {
        report: MissionReport {
            scheduler: cfg.scheduler,
            fusion: cfg.fusion,
            blocks,
            registry: state.registry.clone(),
            metrics,
            totals,
            fires: state.fires.clone(),
            final_states: state.satellites.clone(),
        },
        samples,
    })
}

/// Re-renders the Block's images with the most detections (earliest first on ties).
fn pick_samples(
    state: &MissionState,
    cfg: &MissionConfig,
    res: &BlockResult,
) -> Result<Vec<RasterSample>> {
    if cfg.raster_samples == 0 || res.track.is_empty() {
        return Ok(Vec::new());
    }
    let h = cfg.horizon()?;
    let mut order: Vec<&TrackPoint> = res.track.iter().collect();
    order.sort_by_key(|p| (std::cmp::Reverse(p.detections), p.step, p.satellite));
    let render_cfg = RenderConfig {
        seed: cfg.seed,
        ..cfg.render
    };
    order
        .into_iter()
        .take(cfg.raster_samples)
        .map(|p| {
            let s = p.step / h.steps_per_stage;
            let st = propagate(&res.satellites[p.satellite].orbits[s], p.time)?;
            let raster = view_rasters(
                &st,
                &state.scene,
                &state.frame,
                &render_cfg,
                cfg.fusion,
                p.satellite,
            )?
            .swap_remove(0);
            Ok(RasterSample {
                block: res.block,
                satellite: p.satellite,
                step: p.step,
                raster,
            })
        })
        .collect()
}
