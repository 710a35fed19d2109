//! Distances from arrival sample indices.
//!
//! Each recording contains both the phone's own pulse and its peers'. For a
//! pair the two elapsed times between own and peer pulse, counted in samples
//! on each phone's own buffer, differ by exactly the round trip:
//!
//! ```text
//! d_ij = v * |(T_ij - T_ii) - (T_jj - T_ji)| / (2 f_s)
//! ```
//!
//! Only differences within one row of the TOA matrix enter, so no clock
//! synchronization between phones is needed.

use serde::{Deserialize, Serialize};

use crate::detect::ToaMatrix;
use crate::error::{invalid, Result};

/// Room-temperature speed of sound used by default, m/s.
pub const DEFAULT_SPEED_MPS: f64 = 340.0;
/// Distances beyond this are treated as outliers.
pub const DEFAULT_MAX_RANGE_M: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoundSpeedModel {
    pub temperature_c: f64,
    pub speed_mps: f64,
}

impl SoundSpeedModel {
    pub fn at(temperature_c: f64) -> Result<Self> {
        Ok(Self {
            temperature_c,
            speed_mps: speed_of_sound(temperature_c)?,
        })
    }
}

/// Linear dry-air model `331.3 + 0.606 * theta`, valid for -40..=60 °C.
pub fn speed_of_sound(temperature_c: f64) -> Result<f64> {
    if !(-40.0..=60.0).contains(&temperature_c) {
        return Err(invalid(format!(
            "temperature {temperature_c} °C outside the -40..60 °C model range"
        )));
    }
    Ok(331.3 + 0.606 * temperature_c)
}

/// Two-phone distance from the sample counts between own and peer pulse.
pub fn etoa_distance(delta1_samples: i64, delta2_samples: i64, sample_rate_hz: f64, speed_mps: f64) -> f64 {
    speed_mps * (delta1_samples - delta2_samples).unsigned_abs() as f64 / (2.0 * sample_rate_hz)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMeasurement {
    /// Meters; zero wherever `mask` is false.
    pub d: Vec<Vec<f64>>,
    pub mask: Vec<Vec<bool>>,
    pub n_phones: usize,
}

impl DistanceMeasurement {
    pub fn empty(n_phones: usize) -> Self {
        let mut mask = vec![vec![false; n_phones]; n_phones];
        for (i, row) in mask.iter_mut().enumerate() {
            row[i] = true;
        }
        Self {
            d: vec![vec![0.0; n_phones]; n_phones],
            mask,
            n_phones,
        }
    }

    pub fn set(&mut self, i: usize, j: usize, meters: f64) {
        self.d[i][j] = meters;
        self.d[j][i] = meters;
        self.mask[i][j] = true;
        self.mask[j][i] = true;
    }

    pub fn unset(&mut self, i: usize, j: usize) {
        self.d[i][j] = 0.0;
        self.d[j][i] = 0.0;
        self.mask[i][j] = false;
        self.mask[j][i] = false;
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.mask[i][j].then_some(self.d[i][j])
    }

    /// Measured off-diagonal pairs `(i, j, meters)` with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_phones).flat_map(move |i| {
            (i + 1..self.n_phones).filter_map(move |j| self.get(i, j).map(|d| (i, j, d)))
        })
    }
}

/// Pairwise distances from a TOA matrix. Pairs missing any of the four
/// arrivals, or longer than `max_range_m`, stay unmeasured.
pub fn toa_to_distances(
    toa: &ToaMatrix,
    sample_rate_hz: f64,
    speed_mps: f64,
    max_range_m: f64,
) -> Result<DistanceMeasurement> {
    let n = toa.n_phones;
    if toa.entries.len() != n || toa.entries.iter().any(|r| r.len() != n) {
        return Err(invalid("TOA matrix is not square"));
    }
    if !(sample_rate_hz > 0.0 && speed_mps > 0.0) {
        return Err(invalid("sample rate and speed of sound must be positive"));
    }
    let mut out = DistanceMeasurement::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            let (Some(tij), Some(tii), Some(tjj), Some(tji)) =
                (toa.get(i, j), toa.get(i, i), toa.get(j, j), toa.get(j, i))
            else {
                continue;
            };
            let d = etoa_distance(tij - tii, tjj - tji, sample_rate_hz, speed_mps);
            if d <= max_range_m {
                out.set(i, j, d);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn speed_of_sound_examples() {
        assert_eq!(speed_of_sound(0.0).unwrap(), 331.3);
        assert!((speed_of_sound(25.0).unwrap() - 346.45).abs() < 1e-12);
        assert!((speed_of_sound(-40.0).unwrap() - 307.06).abs() < 1e-12);
        assert!(speed_of_sound(60.5).is_err());
        assert!(speed_of_sound(-41.0).is_err());
        assert_eq!(SoundSpeedModel::at(0.0).unwrap().speed_mps, 331.3);
    }

    #[test]
    fn etoa_examples() {
        assert!((etoa_distance(1000, 800, 48_000.0, 340.0) - 340.0 * 200.0 / 96_000.0).abs() < 1e-15);
        assert_eq!(etoa_distance(512, 512, 48_000.0, 340.0), 0.0);
        assert!((etoa_distance(480, 0, 48_000.0, 340.0) - 1.7).abs() < 1e-12);
        assert_eq!(etoa_distance(0, 480, 48_000.0, 340.0), etoa_distance(480, 0, 48_000.0, 340.0));
    }

    fn toa(rows: &[&[Option<i64>]]) -> ToaMatrix {
        ToaMatrix {
            entries: rows.iter().map(|r| r.to_vec()).collect(),
            n_phones: rows.len(),
        }
    }

    #[test]
    fn two_phone_forward_geometry() {
        // 1.7 m apart: 240 samples one way. Phone 0 emits at 0, phone 1 at 1000,
        // both recordings start at global 0.
        let t = toa(&[&[Some(0), Some(1240)], &[Some(240), Some(1000)]]);
        let d = toa_to_distances(&t, 48_000.0, 340.0, 8.0).unwrap();
        assert!((d.get(0, 1).unwrap() - 1.7).abs() < 1e-12);
        assert_eq!(d.get(1, 0), d.get(0, 1));
        assert_eq!(d.get(0, 0), Some(0.0));
    }

    #[test]
    fn missing_arrival_unmasks_only_that_pair() {
        let n = 5;
        let mut t = ToaMatrix::empty(n);
        for i in 0..n {
            for j in 0..n {
                t.set(i, j, Some(1000 * j as i64 + 10 * (i as i64 - j as i64).abs()));
            }
        }
        t.set(2, 4, None);
        let d = toa_to_distances(&t, 48_000.0, 340.0, 8.0).unwrap();
        assert_eq!(d.get(2, 4), None);
        assert_eq!(d.get(4, 2), None);
        assert_eq!(d.pairs().count(), 9);
    }

    #[test]
    fn outliers_beyond_max_range_removed() {
        // 9.2 m -> 2 * 9.2 * 48000 / 340 = 2597.6 samples round trip; use 2598
        let t = toa(&[&[Some(0), Some(2598)], &[Some(0), Some(0)]]);
        let d = toa_to_distances(&t, 48_000.0, 340.0, 8.0).unwrap();
        assert!(d.get(0, 1).is_none());
        let kept = toa_to_distances(&t, 48_000.0, 340.0, 10.0).unwrap();
        assert!((kept.get(0, 1).unwrap() - 9.2).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn row_clock_shift_is_invisible(
            raw in proptest::collection::vec(0i64..200_000, 16),
            row in 0usize..4,
            shift in -1_000_000i64..1_000_000,
        ) {
            let entries: Vec<Vec<Option<i64>>> = raw.chunks(4).map(|c| c.iter().map(|&v| Some(v)).collect()).collect();
            let t = ToaMatrix { entries, n_phones: 4 };
            let mut shifted = t.clone();
            shifted.shift_row(row, shift);
            let a = toa_to_distances(&t, 48_000.0, 340.0, f64::INFINITY).unwrap();
            let b = toa_to_distances(&shifted, 48_000.0, 340.0, f64::INFINITY).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn output_is_symmetric_and_hollow(
            raw in proptest::collection::vec(proptest::option::weighted(0.8, 0i64..50_000), 25),
        ) {
            let entries: Vec<Vec<Option<i64>>> = raw.chunks(5).map(|c| c.to_vec()).collect();
            let d = toa_to_distances(&ToaMatrix { entries, n_phones: 5 }, 48_000.0, 340.0, 8.0).unwrap();
            for i in 0..5 {
                prop_assert_eq!(d.d[i][i], 0.0);
                for j in 0..5 {
                    prop_assert_eq!(d.d[i][j].to_bits(), d.d[j][i].to_bits());
                    prop_assert_eq!(d.mask[i][j], d.mask[j][i]);
                }
            }
        }
    }
}
