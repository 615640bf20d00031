//! Ground-truth fires and synthetic two-band nadir rasters.
//!
//! Image coordinates are pixel-center indices: column `x` grows to the right, row `y` grows
//! downward, and the boresight falls on `(width / 2, height / 2)`. Image "up" points along the
//! ground-track heading, which is the inclination measured counter-clockwise from East (negated
//! on descending passes).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbit::{propagate, subpoint, wrap_180, EarthFrame, OrbitalElements, StateVector};
use crate::time::{add_seconds, Epoch};
use crate::visibility::sun_direction;

/// km per degree of latitude.
pub const KM_PER_DEG_LAT: f64 = 110.574;
/// km per degree of longitude at the equator.
pub const KM_PER_DEG_LON: f64 = 111.320;
pub const KM2_PER_ACRE: f64 = 0.004_046_856_422_4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FireTruth {
    pub id: u64,
    pub lat: f64,
    pub lon: f64,
    pub start_time: Epoch,
    /// acres
    pub area: f64,
    /// Relative intensity in (0, 1].
    pub brightness: f64,
}

impl FireTruth {
    pub fn active_at(&self, t: Epoch) -> bool {
        self.start_time <= t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Band6,
    Band7,
    Fused,
}

impl Band {
    fn tag(self) -> u64 {
        match self {
            Band::Band6 => 6,
            Band::Band7 => 7,
            Band::Fused => 0,
        }
    }
}

/// Where an image was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterMeta {
    pub satellite: usize,
    pub state: StateVector,
    /// km/px
    pub gsd: f64,
    /// deg
    pub sensor_half_angle: f64,
    /// Subpoint latitude, deg.
    pub lat0: f64,
    /// Subpoint longitude, deg.
    pub lon0: f64,
    /// Orbit inclination recovered from the state, deg.
    pub inclination: f64,
    /// ECI z velocity, km/s.
    pub v_z: f64,
    pub day: bool,
}

impl RasterMeta {
    pub fn from_state(
        state: &StateVector,
        frame: &EarthFrame,
        satellite: usize,
        half_angle: f64,
        n_pixels: usize,
    ) -> Result<Self> {
        let sp = subpoint(state, frame)?;
        let h = state.position.cross(&state.velocity);
        let inclination = if h.norm() > 0.0 {
            (h.z / h.norm()).clamp(-1.0, 1.0).acos().to_degrees()
        } else {
            0.0
        };
        let up = frame.ground_unit_vector(sp.lat, sp.lon, state.time);
        Ok(RasterMeta {
            satellite,
            state: *state,
            gsd: gsd(state, half_angle, n_pixels),
            sensor_half_angle: half_angle,
            lat0: sp.lat,
            lon0: sp.lon,
            inclination,
            v_z: state.velocity.z,
            day: up.dot(&sun_direction(state.time)) > 0.0,
        })
    }

    pub fn time(&self) -> Epoch {
        self.state.time
    }

    /// Image-up direction, deg counter-clockwise from East.
    pub fn heading(&self) -> f64 {
        if self.v_z >= 0.0 {
            self.inclination
        } else {
            -self.inclination
        }
    }

    /// Offsets (right, up) in pixels of a ground point from the boresight, using the flat local
    /// model the geolocation inverts exactly.
    pub fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        let north = (lat - self.lat0) * KM_PER_DEG_LAT;
        let east = wrap_180(lon - self.lon0) * KM_PER_DEG_LON * lat.to_radians().cos();
        let dist = north.hypot(east) / self.gsd;
        if dist == 0.0 {
            return (0.0, 0.0);
        }
        let psi = north.atan2(east).to_degrees();
        let phi = (psi - self.heading() + 90.0).to_radians();
        (dist * phi.cos(), dist * phi.sin())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub band: Band,
    /// Row-major.
    pub pixels: Vec<f64>,
    pub meta: RasterMeta,
}

impl Raster {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.width / 2) as f64, (self.height / 2) as f64)
    }

    /// Pixel coordinates (column, row) of a ground point.
    pub fn pixel_of(&self, lat: f64, lon: f64) -> (f64, f64) {
        let (dx, dy) = self.meta.project(lat, lon);
        let (cx, cy) = self.center();
        (cx + dx, cy - dy)
    }

    /// 16-bit binary PGM plus a JSON sidecar holding the meta.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(f);
        let mut buf = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        for &p in &self.pixels {
            let v = (p.clamp(0.0, 1.0) * 65535.0).round() as u16;
            buf.extend_from_slice(&v.to_be_bytes());
        }
        out.write_all(&buf).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))?;
        let side = sidecar_path(path);
        let sidecar = RasterSidecar {
            band: self.band,
            meta: self.meta,
        };
        std::fs::write(&side, serde_json::to_vec_pretty(&sidecar)?).map_err(|e| Error::io(&side, e))
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let (width, height, maxval, body) = parse_pgm_header(&bytes)?;
        if maxval != 65535 {
            return Err(Error::Format(format!(
                "expected a 16-bit PGM, maxval is {maxval}"
            )));
        }
        if body.len() != width * height * 2 {
            return Err(Error::Format(format!(
                "PGM body holds {} bytes, expected {}",
                body.len(),
                width * height * 2
            )));
        }
        let pixels = body
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
            .collect();
        let side = sidecar_path(path);
        let text = std::fs::read(&side).map_err(|e| Error::io(&side, e))?;
        let sidecar: RasterSidecar = serde_json::from_slice(&text)?;
        Ok(Raster {
            width,
            height,
            band: sidecar.band,
            pixels,
            meta: sidecar.meta,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RasterSidecar {
    band: Band,
    meta: RasterMeta,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    name.into()
}

fn parse_pgm_header(bytes: &[u8]) -> Result<(usize, usize, u32, &[u8])> {
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::Format(format!(
            "not a binary PGM (magic {})",
            fields[0]
        )));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM header field {s:?}")))
    };
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    // single whitespace byte after maxval
    Ok((w, h, maxval as u32, bytes.get(i + 1..).unwrap_or(&[])))
}

/// Ground sample distance, km/px.
pub fn gsd(state: &StateVector, half_angle: f64, n_pixels: usize) -> f64 {
    gsd_at_altitude(state.altitude(), half_angle, n_pixels)
}

pub fn gsd_at_altitude(alt: f64, half_angle: f64, n_pixels: usize) -> f64 {
    2.0 * alt * half_angle.to_radians().tan() / n_pixels as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClutterKind {
    /// Sun-lit coastline and island reflectance; invisible at night.
    Island,
    /// Hot bare ground that glows mostly in the longer band; night only.
    AridGlint,
}

/// Non-fire bright feature used to exercise false positives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterFeature {
    pub kind: ClutterKind,
    pub lat: f64,
    pub lon: f64,
    /// km
    pub radius: f64,
    pub intensity: f64,
}

impl ClutterFeature {
    fn gain(&self, band: Band, day: bool) -> f64 {
        match (self.kind, day, band) {
            (ClutterKind::Island, true, Band::Band7) => 0.9,
            (ClutterKind::Island, true, _) => 1.0,
            (ClutterKind::AridGlint, false, Band::Band6) => 0.35,
            (ClutterKind::AridGlint, false, _) => 1.0,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scene {
    pub fires: Vec<FireTruth>,
    pub clutter: Vec<ClutterFeature>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub pixels: usize,
    /// deg
    pub sensor_half_angle: f64,
    pub band6_gain: f64,
    pub band7_gain: f64,
    pub background_day: f64,
    pub background_night: f64,
    pub noise: f64,
    /// Optics blur added in quadrature to the fire footprint, px.
    pub psf_sigma: f64,
    pub seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            pixels: 128,
            sensor_half_angle: 22.5,
            band6_gain: 1.0,
            band7_gain: 0.85,
            background_day: 0.12,
            background_night: 0.03,
            noise: 0.04,
            psf_sigma: 1.0,
            seed: 0,
        }
    }
}

impl RenderConfig {
    pub fn band_gain(&self, band: Band) -> Result<f64> {
        match band {
            Band::Band6 => Ok(self.band6_gain),
            Band::Band7 => Ok(self.band7_gain),
            Band::Fused => Err(Error::invalid(
                "fused rasters come from early_fuse, not render",
            )),
        }
    }

    /// Blob width for a fire of `area_acres`, px.
    pub fn fire_sigma(&self, area_acres: f64, gsd: f64) -> f64 {
        let footprint = (area_acres * KM2_PER_ACRE).sqrt() / gsd / 2.0;
        footprint.hypot(self.psf_sigma)
    }
}

const BLOB_CUTOFF_SIGMAS: f64 = 4.0;

/// Renders one band of the scene seen from `state`.
pub fn render(
    state: &StateVector,
    scene: &Scene,
    band: Band,
    frame: &EarthFrame,
    cfg: &RenderConfig,
    satellite: usize,
) -> Result<Raster> {
    let gain = cfg.band_gain(band)?;
    let meta = RasterMeta::from_state(state, frame, satellite, cfg.sensor_half_angle, cfg.pixels)?;
    let n = cfg.pixels;
    let mut signal = vec![0.0; n * n];
    let mut raster = Raster {
        width: n,
        height: n,
        band,
        pixels: Vec::new(),
        meta,
    };
    for fire in scene.fires.iter().filter(|f| f.active_at(state.time)) {
        let (px, py) = raster.pixel_of(fire.lat, fire.lon);
        let sigma = cfg.fire_sigma(fire.area, meta.gsd);
        add_blob(&mut signal, n, px, py, sigma, fire.brightness * gain);
    }
    for c in &scene.clutter {
        let g = c.gain(band, meta.day);
        if g == 0.0 {
            continue;
        }
        let (px, py) = raster.pixel_of(c.lat, c.lon);
        let sigma = (c.radius / meta.gsd).hypot(cfg.psf_sigma);
        add_blob(&mut signal, n, px, py, sigma, c.intensity * g);
    }
    let bg = if meta.day {
        cfg.background_day
    } else {
        cfg.background_night
    };
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(cfg.seed, satellite, state.time, band));
    raster.pixels = signal
        .into_iter()
        .map(|s| (bg + s + rng.gen::<f64>() * cfg.noise).clamp(0.0, 1.0))
        .collect();
    Ok(raster)
}

/// Band 6 and band 7 views of the same instant.
pub fn render_pair(
    state: &StateVector,
    scene: &Scene,
    frame: &EarthFrame,
    cfg: &RenderConfig,
    satellite: usize,
) -> Result<(Raster, Raster)> {
    Ok((
        render(state, scene, Band::Band6, frame, cfg, satellite)?,
        render(state, scene, Band::Band7, frame, cfg, satellite)?,
    ))
}

fn add_blob(signal: &mut [f64], n: usize, px: f64, py: f64, sigma: f64, peak: f64) {
    let reach = BLOB_CUTOFF_SIGMAS * sigma;
    if !(px + reach >= 0.0
        && py + reach >= 0.0
        && px - reach <= (n - 1) as f64
        && py - reach <= (n - 1) as f64)
    {
        return;
    }
    let x0 = (px - reach).ceil().max(0.0) as usize;
    let x1 = ((px + reach).floor() as usize).min(n - 1);
    let y0 = (py - reach).ceil().max(0.0) as usize;
    let y1 = ((py + reach).floor() as usize).min(n - 1);
    let two_s2 = 2.0 * sigma * sigma;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let r2 = (x as f64 - px).powi(2) + (y as f64 - py).powi(2);
            if r2 <= reach * reach {
                signal[y * n + x] += peak * (-r2 / two_s2).exp();
            }
        }
    }
}

fn noise_seed(seed: u64, satellite: usize, t: Epoch, band: Band) -> u64 {
    let nanos = t.timestamp_nanos_opt().unwrap_or(i64::MAX) as u64;
    [satellite as u64, nanos, band.tag()]
        .into_iter()
        .fold(splitmix(seed), |h, v| splitmix(h ^ v))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Acceptance rules for fire-hotspot CSV ingest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    /// deg
    pub dedup_cell: f64,
    /// acres, for the dimmest and brightest hotspot
    pub area_range: (f64, f64),
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            dedup_cell: 0.05,
            area_range: (1000.0, 5000.0),
        }
    }
}

const REQUIRED_COLUMNS: [&str; 6] = [
    "latitude",
    "longitude",
    "acq_date",
    "acq_time",
    "brightness",
    "confidence",
];

pub fn ingest_fires(path: &Path, start: Epoch, end: Epoch) -> Result<Vec<FireTruth>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_fires_from_reader(f, start, end, &IngestConfig::default())
}

/// Reads hotspot rows, keeps nominal/high confidence rows acquired in `[start, end]`, and merges
/// rows sharing a grid cell into one fire located at the brightest row and ignited at the
/// earliest one.
pub fn ingest_fires_from_reader<R: Read>(
    reader: R,
    start: Epoch,
    end: Epoch,
    cfg: &IngestConfig,
) -> Result<Vec<FireTruth>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut col = [0usize; 6];
    for (slot, name) in col.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }

    struct Cell {
        lat: f64,
        lon: f64,
        start: Epoch,
        raw: f64,
    }
    let mut cells: Vec<Cell> = Vec::new();
    let mut index: HashMap<(i64, i64), usize> = HashMap::new();
    let mut max_raw = 0.0f64;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |message: String| Error::Row { line, message };
        let field = |i: usize| record.get(col[i]).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            field(i).parse::<f64>().map_err(|_| {
                row_err(format!(
                    "{} {:?} is not a number",
                    REQUIRED_COLUMNS[i],
                    field(i)
                ))
            })
        };
        let (lat, lon, raw) = (num(0)?, num(1)?, num(4)?);
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(row_err(format!("coordinates ({lat}, {lon}) out of range")));
        }
        if !(raw > 0.0) {
            return Err(row_err(format!("brightness {raw} must be positive")));
        }
        max_raw = max_raw.max(raw);
        let time = parse_acquisition(field(2), field(3)).map_err(row_err)?;
        let keep = parse_confidence(field(5)).map_err(row_err)?;
        if !keep || time < start || time > end {
            continue;
        }
        let lon = wrap_180(lon);
        let key = (
            (lat / cfg.dedup_cell).floor() as i64,
            (lon / cfg.dedup_cell).floor() as i64,
        );
        match index.get(&key) {
            Some(&i) => {
                let c = &mut cells[i];
                c.start = c.start.min(time);
                if raw > c.raw {
                    c.raw = raw;
                    c.lat = lat;
                    c.lon = lon;
                }
            }
            None => {
                index.insert(key, cells.len());
                cells.push(Cell {
                    lat,
                    lon,
                    start: time,
                    raw,
                });
            }
        }
    }
    let (amin, amax) = cfg.area_range;
    Ok(cells
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let brightness = c.raw / max_raw;
            FireTruth {
                id: i as u64,
                lat: c.lat,
                lon: c.lon,
                start_time: c.start,
                area: amin + (amax - amin) * brightness,
                brightness,
            }
        })
        .collect())
}

fn parse_acquisition(date: &str, time: &str) -> std::result::Result<Epoch, String> {
    let d = NaiveDate::parse_from_str(date, "%Y-%m-%d")
        .map_err(|e| format!("acq_date {date:?}: {e}"))?;
    let hhmm: u32 = time
        .parse()
        .map_err(|_| format!("acq_time {time:?} is not HHMM"))?;
    let t = NaiveTime::from_hms_opt(hhmm / 100, hhmm % 100, 0)
        .ok_or_else(|| format!("acq_time {time:?} is not HHMM"))?;
    Ok(Utc.from_utc_datetime(&d.and_time(t)))
}

/// True for nominal or high confidence. Accepts the letter codes and percentage scores.
fn parse_confidence(s: &str) -> std::result::Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "n" | "nominal" | "h" | "high" => Ok(true),
        "l" | "low" => Ok(false),
        other => other
            .parse::<f64>()
            .map(|v| v >= 30.0)
            .map_err(|_| format!("confidence {s:?} not recognised")),
    }
}

/// Synthetic fires scattered around the ground track of `elements` over `[start, start + span]`.
///
/// Every fire ignites at a uniformly drawn time in `[ignite_from, start + span]` and sits
/// within `max_offset` deg (each axis) of the subpoint at a uniformly drawn instant.
#[allow(clippy::too_many_arguments)]
pub fn fires_near_track(
    elements: &OrbitalElements,
    frame: &EarthFrame,
    start: Epoch,
    span: f64,
    ignite_from: Epoch,
    count: usize,
    max_offset: f64,
    seed: u64,
) -> Result<Vec<FireTruth>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ignite_span = crate::time::seconds_between(ignite_from, add_seconds(start, span)).max(0.0);
    (0..count)
        .map(|i| {
            let t = add_seconds(start, rng.gen::<f64>() * span);
            let sp = subpoint(&propagate(elements, t)?, frame)?;
            let lat = (sp.lat + rng.gen_range(-max_offset..=max_offset)).clamp(-85.0, 85.0);
            let lon = wrap_180(sp.lon + rng.gen_range(-max_offset..=max_offset));
            let brightness = rng.gen_range(0.75..=1.0);
            Ok(FireTruth {
                id: i as u64,
                lat,
                lon,
                start_time: add_seconds(ignite_from, rng.gen::<f64>() * ignite_span),
                area: rng.gen_range(1000.0..=5000.0),
                brightness,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::OrbitalElements;
    use chrono::DateTime;

    fn epoch() -> Epoch {
        DateTime::parse_from_rfc3339("2024-08-07T00:00:00Z")
            .unwrap()
            .with_timezone(&Utc)
    }

    fn sat() -> (StateVector, EarthFrame) {
        let el = OrbitalElements::circular(6378.137 + 833.0, 98.7, 30.0, 40.0, epoch()).unwrap();
        (
            propagate(&el, epoch()).unwrap(),
            EarthFrame::from_gmst(epoch()),
        )
    }

    fn fire(lat: f64, lon: f64, brightness: f64) -> FireTruth {
        FireTruth {
            id: 0,
            lat,
            lon,
            start_time: epoch(),
            area: 3000.0,
            brightness,
        }
    }

    #[test]
    fn gsd_formula() {
        let g = gsd_at_altitude(833.0, 22.5, 128);
        assert!((g - 5.391_248_397_762_315).abs() < 1e-9);
        assert_eq!(gsd_at_altitude(833.0, 0.0, 128), 0.0);
        assert!((gsd_at_altitude(833.0, 22.5, 256) * 2.0 - g).abs() < 1e-15);
    }

    #[test]
    fn empty_scene_stays_at_background() {
        let (st, frame) = sat();
        let r = render(
            &st,
            &Scene::default(),
            Band::Band6,
            &frame,
            &RenderConfig::default(),
            0,
        )
        .unwrap();
        let bg = if r.meta.day { 0.12 } else { 0.03 };
        assert!(r.pixels.iter().all(|&p| p >= bg && p <= bg + 0.04));
    }

    #[test]
    fn centred_fire_peaks_at_centre() {
        let (st, frame) = sat();
        let meta = RasterMeta::from_state(&st, &frame, 0, 22.5, 128).unwrap();
        let scene = Scene {
            fires: vec![fire(meta.lat0, meta.lon0, 1.0)],
            ..Scene::default()
        };
        let r = render(
            &st,
            &scene,
            Band::Band6,
            &frame,
            &RenderConfig::default(),
            0,
        )
        .unwrap();
        let (imax, &peak) = r
            .pixels
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert_eq!((imax % 128, imax / 128), (64, 64));
        assert!(peak >= 0.9);
    }

    #[test]
    fn render_is_deterministic_and_seeded() {
        let (st, frame) = sat();
        let cfg = RenderConfig::default();
        let a = render(&st, &Scene::default(), Band::Band7, &frame, &cfg, 1).unwrap();
        let b = render(&st, &Scene::default(), Band::Band7, &frame, &cfg, 1).unwrap();
        assert_eq!(a, b);
        let c = render(
            &st,
            &Scene::default(),
            Band::Band7,
            &frame,
            &RenderConfig { seed: 9, ..cfg },
            1,
        )
        .unwrap();
        assert_ne!(a.pixels, c.pixels);
    }

    #[test]
    fn band7_not_brighter_before_noise() {
        let (st, frame) = sat();
        let meta = RasterMeta::from_state(&st, &frame, 0, 22.5, 128).unwrap();
        let scene = Scene {
            fires: vec![
                fire(meta.lat0 + 0.3, meta.lon0 - 0.2, 0.9),
                fire(meta.lat0, meta.lon0, 1.0),
            ],
            ..Scene::default()
        };
        let cfg = RenderConfig {
            noise: 0.0,
            ..RenderConfig::default()
        };
        let b6 = render(&st, &scene, Band::Band6, &frame, &cfg, 0).unwrap();
        let b7 = render(&st, &scene, Band::Band7, &frame, &cfg, 0).unwrap();
        assert!(b6.pixels.iter().zip(&b7.pixels).all(|(a, b)| b <= a));
    }

    #[test]
    fn distant_fire_leaves_raster_untouched() {
        let (st, frame) = sat();
        let meta = RasterMeta::from_state(&st, &frame, 0, 22.5, 128).unwrap();
        let cfg = RenderConfig::default();
        let far = Scene {
            fires: vec![fire((meta.lat0 + 10.0).min(80.0), meta.lon0, 1.0)],
            ..Scene::default()
        };
        let a = render(&st, &far, Band::Band6, &frame, &cfg, 0).unwrap();
        let b = render(&st, &Scene::default(), Band::Band6, &frame, &cfg, 0).unwrap();
        assert_eq!(a.pixels, b.pixels);
    }

    #[test]
    fn future_fire_is_not_drawn() {
        let (st, frame) = sat();
        let meta = RasterMeta::from_state(&st, &frame, 0, 22.5, 128).unwrap();
        let mut f = fire(meta.lat0, meta.lon0, 1.0);
        f.start_time = add_seconds(epoch(), 60.0);
        let cfg = RenderConfig::default();
        let a = render(
            &st,
            &Scene {
                fires: vec![f],
                clutter: vec![],
            },
            Band::Band6,
            &frame,
            &cfg,
            0,
        )
        .unwrap();
        let b = render(&st, &Scene::default(), Band::Band6, &frame, &cfg, 0).unwrap();
        assert_eq!(a.pixels, b.pixels);
    }

    const HEADER: &str = "latitude,longitude,acq_date,acq_time,brightness,confidence\n";

    fn window() -> (Epoch, Epoch) {
        (epoch(), add_seconds(epoch(), 86_400.0))
    }

    #[test]
    fn ingest_empty_and_single() {
        let (s, e) = window();
        let cfg = IngestConfig::default();
        assert!(ingest_fires_from_reader(HEADER.as_bytes(), s, e, &cfg)
            .unwrap()
            .is_empty());
        let one = format!("{HEADER}37.1,-120.2,2024-08-07,0630,330.5,h\n");
        let fires = ingest_fires_from_reader(one.as_bytes(), s, e, &cfg).unwrap();
        assert_eq!(fires.len(), 1);
        assert_eq!(fires[0].brightness, 1.0);
        assert_eq!(fires[0].area, 5000.0);
        assert_eq!(
            fires[0].start_time,
            add_seconds(epoch(), 6.0 * 3600.0 + 1800.0)
        );
    }

    #[test]
    fn ingest_dedups_and_filters() {
        let (s, e) = window();
        let text = format!(
            "{HEADER}37.11,-120.21,2024-08-07,0630,300,n\n37.12,-120.22,2024-08-07,0500,400,h\n\
             10.0,10.0,2024-08-07,0100,200,l\n11.0,11.0,2024-08-09,0100,200,h\n12.0,12.0,2024-08-07,0100,100,80\n"
        );
        let fires =
            ingest_fires_from_reader(text.as_bytes(), s, e, &IngestConfig::default()).unwrap();
        assert_eq!(fires.len(), 2);
        assert_eq!((fires[0].lat, fires[0].lon), (37.12, -120.22));
        assert_eq!(fires[0].start_time, add_seconds(epoch(), 5.0 * 3600.0));
        assert_eq!(fires[1].brightness, 0.25);
    }

    #[test]
    fn ingest_errors_name_the_problem() {
        let (s, e) = window();
        let cfg = IngestConfig::default();
        let missing = "latitude,longitude,acq_date,acq_time,confidence\n";
        match ingest_fires_from_reader(missing.as_bytes(), s, e, &cfg) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "brightness"),
            other => panic!("{other:?}"),
        }
        let bad = format!(
            "{HEADER}37.1,-120.2,2024-08-07,0630,330.5,h\n37.1,oops,2024-08-07,0630,330.5,h\n"
        );
        match ingest_fires_from_reader(bad.as_bytes(), s, e, &cfg) {
            Err(Error::Row { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pgm_roundtrip() {
        let (st, frame) = sat();
        let r = render(
            &st,
            &Scene::default(),
            Band::Band6,
            &frame,
            &RenderConfig::default(),
            0,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.pgm");
        r.write_pgm(&path).unwrap();
        let back = Raster::read_pgm(&path).unwrap();
        assert_eq!(back.meta, r.meta);
        assert!(back
            .pixels
            .iter()
            .zip(&r.pixels)
            .all(|(a, b)| (a - b).abs() <= 0.5 / 65535.0 + 1e-12));
    }

    #[test]
    fn synthetic_fires_follow_track() {
        let el = OrbitalElements::circular(7211.0, 98.7, 0.0, 0.0, epoch()).unwrap();
        let frame = EarthFrame::from_gmst(epoch());
        let fires = fires_near_track(&el, &frame, epoch(), 3600.0, epoch(), 20, 1.0, 3).unwrap();
        assert_eq!(fires.len(), 20);
        assert!(fires
            .iter()
            .all(|f| (1000.0..=5000.0).contains(&f.area) && f.brightness > 0.0));
    }
}
