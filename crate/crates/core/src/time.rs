//! UTC time helpers shared by the propagation and illumination models.

use chrono::{DateTime, Duration, Utc};

pub type Epoch = DateTime<Utc>;

/// Seconds from `from` to `to` (negative when `to` precedes `from`).
pub fn seconds_between(from: Epoch, to: Epoch) -> f64 {
    let d = to - from;
    match d.num_nanoseconds() {
        Some(ns) => ns as f64 * 1e-9,
        None => d.num_milliseconds() as f64 * 1e-3,
    }
}

/// `t + seconds`, rounded to the nearest nanosecond.
pub fn add_seconds(t: Epoch, seconds: f64) -> Epoch {
    t + Duration::nanoseconds((seconds * 1e9).round() as i64)
}

pub fn julian_date(t: Epoch) -> f64 {
    // 2000-01-01T12:00:00Z is JD 2451545.0
    let j2000 = DateTime::parse_from_rfc3339("2000-01-01T12:00:00Z")
        .expect("valid literal")
        .with_timezone(&Utc);
    2_451_545.0 + seconds_between(j2000, t) / 86_400.0
}

/// Greenwich mean sidereal time in degrees, [0, 360).
pub fn gmst_deg(t: Epoch) -> f64 {
    let tu = (julian_date(t) - 2_451_545.0) / 36_525.0;
    let secs = 67_310.548_41 + (876_600.0 * 3600.0 + 8_640_184.812_866) * tu + 0.093_104 * tu * tu
        - 6.2e-6 * tu * tu * tu;
    (secs / 240.0).rem_euclid(360.0)
}
