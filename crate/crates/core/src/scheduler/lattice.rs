//! Integer grid for (data, battery) levels.

use crate::error::{Error, Result};

use super::{ResourceParams, SatelliteStart};

const MAX_SCALE_DIGITS: i32 = 6;

/// Data and battery levels as integer multiples of a common quantum above the minimums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub data_quantum: f64,
    pub battery_quantum: f64,
    pub d_min: f64,
    pub b_min: f64,
    /// Number of data levels.
    pub nd: usize,
    /// Number of battery levels.
    pub nb: usize,
    pub d_obs: usize,
    pub d_comm: usize,
    pub b_charge: usize,
    pub b_obs: usize,
    pub b_comm: usize,
    pub b_recon: usize,
    pub b_time: usize,
}

impl Lattice {
    pub fn new(r: &ResourceParams, starts: &[SatelliteStart], cap: usize) -> Result<Self> {
        let mut data = vec![r.d_obs, r.d_comm, r.d_min, r.d_max];
        data.extend(starts.iter().map(|s| s.data));
        let mut battery = vec![
            r.b_charge, r.b_obs, r.b_comm, r.b_recon, r.b_time, r.b_min, r.b_max,
        ];
        battery.extend(starts.iter().map(|s| s.battery));
        let dq = quantum(&data).map_err(|v| Error::NoCommonQuantum(format!("data value {v}")))?;
        let bq =
            quantum(&battery).map_err(|v| Error::NoCommonQuantum(format!("battery value {v}")))?;
        let levels = |lo: f64, hi: f64, q: f64| ((hi - lo) / q).round() as usize + 1;
        let nd = levels(r.d_min, r.d_max, dq);
        let nb = levels(r.b_min, r.b_max, bq);
        let states = nd.saturating_mul(nb);
        if states > cap {
            return Err(Error::LatticeTooLarge { states, cap });
        }
        let units = |v: f64, q: f64| (v / q).round() as usize;
        Ok(Lattice {
            data_quantum: dq,
            battery_quantum: bq,
            d_min: r.d_min,
            b_min: r.b_min,
            nd,
            nb,
            d_obs: units(r.d_obs, dq),
            d_comm: units(r.d_comm, dq),
            b_charge: units(r.b_charge, bq),
            b_obs: units(r.b_obs, bq),
            b_comm: units(r.b_comm, bq),
            b_recon: units(r.b_recon, bq),
            b_time: units(r.b_time, bq),
        })
    }

    pub fn states(&self) -> usize {
        self.nd * self.nb
    }

    pub fn index(&self, d: usize, b: usize) -> usize {
        d * self.nb + b
    }

    pub fn unpack(&self, i: usize) -> (usize, usize) {
        (i / self.nb, i % self.nb)
    }

    /// Grid coordinates of a level, if it sits on the grid and inside the bounds.
    pub fn locate(&self, data: f64, battery: f64) -> Option<(usize, usize)> {
        let on = |v: f64, lo: f64, q: f64, n: usize| -> Option<usize> {
            let u = (v - lo) / q;
            let r = u.round();
            if (u - r).abs() > 1e-6 || r < 0.0 || r as usize >= n {
                return None;
            }
            Some(r as usize)
        };
        Some((
            on(data, self.d_min, self.data_quantum, self.nd)?,
            on(battery, self.b_min, self.battery_quantum, self.nb)?,
        ))
    }

    pub fn data_level(&self, d: usize) -> f64 {
        self.d_min + d as f64 * self.data_quantum
    }

    pub fn battery_level(&self, b: usize) -> f64 {
        self.b_min + b as f64 * self.battery_quantum
    }
}

/// Largest q with every value an integer multiple of q, found by scaling to integers with at
/// most six decimal digits. Returns the first value that cannot be scaled.
fn quantum(values: &[f64]) -> std::result::Result<f64, f64> {
    'scale: for digits in 0..=MAX_SCALE_DIGITS {
        let scale = 10f64.powi(digits);
        let mut g: u64 = 0;
        for &v in values {
            let x = v.abs() * scale;
            if (x - x.round()).abs() > 1e-9 * scale.max(1.0) || x > 9e15 {
                continue 'scale;
            }
            g = gcd(g, x.round() as u64);
        }
        return Ok(if g == 0 { 1.0 } else { g as f64 / scale });
    }
    let bad = values
        .iter()
        .copied()
        .find(|v| {
            let x = v.abs() * 10f64.powi(MAX_SCALE_DIGITS);
            (x - x.round()).abs() > 1e-3
        })
        .unwrap_or(f64::NAN);
    Err(bad)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lattice() {
        let r = ResourceParams::default();
        let l = Lattice::new(
            &r,
            &[SatelliteStart {
                data: 0.0,
                battery: 100.0,
            }],
            1 << 22,
        )
        .unwrap();
        assert_eq!((l.data_quantum, l.battery_quantum), (50.0, 1.0));
        assert_eq!((l.nd, l.nb), (31, 101));
        assert_eq!((l.d_obs, l.d_comm, l.b_recon), (2, 1, 20));
    }

    #[test]
    fn fractional_quantum() {
        assert_eq!(quantum(&[2.5, 1.0, 100.0]).unwrap(), 0.5);
        assert_eq!(quantum(&[0.0, 0.0]).unwrap(), 1.0);
        assert!(quantum(&[1.0, std::f64::consts::PI]).is_err());
    }

    #[test]
    fn cap_and_quantum_errors() {
        let r = ResourceParams {
            b_time: 0.001,
            ..ResourceParams::default()
        };
        assert!(matches!(
            Lattice::new(&r, &[], 1 << 16),
            Err(Error::LatticeTooLarge { .. })
        ));
        let r = ResourceParams {
            b_time: std::f64::consts::E,
            ..ResourceParams::default()
        };
        assert!(matches!(
            Lattice::new(&r, &[], 1 << 22),
            Err(Error::NoCommonQuantum(_))
        ));
    }

    #[test]
    fn locate_rejects_off_grid() {
        let l = Lattice::new(&ResourceParams::default(), &[], 1 << 22).unwrap();
        assert_eq!(l.locate(150.0, 37.0), Some((3, 37)));
        assert_eq!(l.locate(125.0, 37.0), None);
        assert_eq!(l.locate(0.0, 101.0), None);
    }
}
