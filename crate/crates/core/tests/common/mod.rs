#![allow(dead_code)]

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use firesched::mission::{FireSource, GridConfig, MissionConfig, SatelliteConfig};
use firesched::orbit::{propagate, subpoint, EarthFrame, OrbitalElements};
use firesched::scene::FireTruth;
use firesched::time::{add_seconds, Epoch};
use firesched::visibility::{GroundPoint, PointKind};

pub fn start() -> Epoch {
    DateTime::parse_from_rfc3339("2024-08-07T00:00:00Z")
        .unwrap()
        .with_timezone(&Utc)
}

pub fn stations() -> Vec<GroundPoint> {
    vec![
        GroundPoint::new("boecillo", 41.54, -4.70, PointKind::GroundStation).unwrap(),
        GroundPoint::new("svalbard", 78.23, 15.41, PointKind::GroundStation).unwrap(),
    ]
}

/// Two satellites half an orbit apart in one sun-synchronous-like plane.
pub fn satellites(budget: f64) -> Vec<SatelliteConfig> {
    (0..2)
        .map(|k| SatelliteConfig {
            name: format!("sat-{}", k + 1),
            elements: OrbitalElements::circular(7211.0, 98.7, 40.0, 180.0 * k as f64, start())
                .unwrap(),
            budget,
            data: 0.0,
            battery: 100.0,
        })
        .collect()
}

/// Fires on the northern high-latitude part of the ground tracks, where consecutive orbits
/// overlap, already burning at the start.
pub fn polar_fires(sats: &[SatelliteConfig], count: usize, span: f64, seed: u64) -> Vec<FireTruth> {
    let frame = EarthFrame::from_gmst(start());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let k = out.len() % sats.len();
        let t = add_seconds(start(), rng.gen::<f64>() * span);
        let sp = subpoint(&propagate(&sats[k].elements, t).unwrap(), &frame).unwrap();
        if sp.lat < 62.0 || sp.lat > 78.0 {
            continue;
        }
        out.push(FireTruth {
            id: out.len() as u64,
            lat: sp.lat + rng.gen_range(-0.3..0.3),
            lon: sp.lon + rng.gen_range(-0.3..0.3),
            start_time: add_seconds(start(), -3600.0),
            area: rng.gen_range(2000.0..5000.0),
            brightness: rng.gen_range(0.8..1.0),
        });
    }
    out
}

pub fn config(
    n_blocks: usize,
    steps_per_block: usize,
    n_planes: usize,
    n_anomaly: usize,
    fires: Vec<FireTruth>,
) -> MissionConfig {
    MissionConfig {
        start: start(),
        n_blocks,
        block_duration: steps_per_block as f64 * 100.0,
        step: 100.0,
        stages: 2,
        satellites: satellites(1.0),
        ground_stations: stations(),
        fires: FireSource::Inline { fires },
        clutter: Vec::new(),
        detector: None,
        fusion: firesched::mission::FusionMode::Early,
        scheduler: firesched::scheduler::Variant::Reossp,
        seed: 7,
        resources: Default::default(),
        downlink_weight: 5.0,
        grid: GridConfig {
            n_planes,
            n_anomaly,
            ..GridConfig::default()
        },
        visibility: Default::default(),
        render: Default::default(),
        registry: Default::default(),
        late_fusion_iou: 0.55,
        match_radius: 0.5,
        reschedule: firesched::mission::RescheduleCadence::OnPromotion,
        time_limit: None,
        state_cap: 1 << 22,
        execution: Default::default(),
        raster_samples: 1,
    }
}
