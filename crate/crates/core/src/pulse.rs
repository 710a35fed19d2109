//! Pseudo-noise ranging pulses.
//!
//! Each phone transmits an i.i.d. ±1 sequence, upsampled by linear
//! interpolation and multiplied by a cosine carrier so that it lands in the
//! 15–20 kHz band.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::seed;

pub const DEFAULT_LENGTH: usize = 1000;
pub const DEFAULT_UPSAMPLE: usize = 4;
pub const DEFAULT_CARRIER_HZ: f64 = 17_500.0;

/// Band the carrier is expected to sit in on commodity phone hardware.
pub const CARRIER_BAND_HZ: (f64, f64) = (15_000.0, 20_000.0);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinarySequence {
    pub values: Vec<i8>,
    pub seed: u64,
}

impl BinarySequence {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnPulse {
    pub base: BinarySequence,
    pub upsample_factor: usize,
    pub carrier_hz: f64,
    pub sample_rate_hz: f64,
    /// Transmit waveform at `sample_rate_hz`, peak magnitude 1.
    pub samples: Vec<f64>,
    pub phone_id: usize,
}

impl PnPulse {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / self.sample_rate_hz
    }
}

/// Draws `length` fair ±1 values from a generator seeded with `seed`.
pub fn gen_pn_sequence(length: usize, seed: u64) -> Result<BinarySequence> {
    if length == 0 {
        return Err(invalid("sequence length must be at least 1"));
    }
    let mut rng = seed::rng(seed);
    let values = (0..length)
        .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
        .collect();
    Ok(BinarySequence { values, seed })
}

/// Upsamples `base` by `upsample_factor` with linear interpolation, applies a
/// cosine carrier and normalizes the peak magnitude to 1.
///
/// The samples after the last base value hold that value, so the output has
/// exactly `base.len() * upsample_factor` samples.
pub fn shape_pulse(
    base: &BinarySequence,
    upsample_factor: usize,
    carrier_hz: f64,
    sample_rate_hz: f64,
) -> Result<PnPulse> {
    if base.is_empty() {
        return Err(invalid("empty base sequence"));
    }
    if upsample_factor == 0 {
        return Err(invalid("upsample factor must be at least 1"));
    }
    if !(sample_rate_hz > 0.0) {
        return Err(invalid(format!("sample rate {sample_rate_hz} Hz must be positive")));
    }
    if !(carrier_hz > 0.0 && carrier_hz < sample_rate_hz / 2.0) {
        return Err(invalid(format!(
            "carrier {carrier_hz} Hz outside (0, {}) Hz",
            sample_rate_hz / 2.0
        )));
    }

    let p = upsample_factor;
    let values = &base.values;
    let omega = 2.0 * PI * carrier_hz / sample_rate_hz;
    let mut samples = Vec::with_capacity(values.len() * p);
    for (k, &b) in values.iter().enumerate() {
        let here = f64::from(b);
        let next = values.get(k + 1).map_or(here, |&v| f64::from(v));
        for r in 0..p {
            let envelope = here + (next - here) * r as f64 / p as f64;
            let n = (k * p + r) as f64;
            samples.push(envelope * (omega * n).cos());
        }
    }

    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        samples.iter_mut().for_each(|s| *s /= peak);
    }

    Ok(PnPulse {
        base: base.clone(),
        upsample_factor,
        carrier_hz,
        sample_rate_hz,
        samples,
        phone_id: 0,
    })
}

/// Seed of phone `phone_id`'s sequence within a session.
pub fn phone_seed(session_seed: u64, phone_id: usize) -> u64 {
    session_seed ^ phone_id as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseParams {
    pub length: usize,
    pub upsample: usize,
    pub carrier_hz: f64,
}

impl Default for PulseParams {
    fn default() -> Self {
        Self {
            length: DEFAULT_LENGTH,
            upsample: DEFAULT_UPSAMPLE,
            carrier_hz: DEFAULT_CARRIER_HZ,
        }
    }
}

impl PulseParams {
    pub fn samples(&self) -> usize {
        self.length * self.upsample
    }
}

/// One pulse per phone, phone `i` seeded with `session_seed ^ i`.
pub fn phone_pulses(
    n_phones: usize,
    session_seed: u64,
    params: &PulseParams,
    sample_rate_hz: f64,
) -> Result<Vec<PnPulse>> {
    (0..n_phones)
        .map(|id| {
            let base = gen_pn_sequence(params.length, phone_seed(session_seed, id))?;
            let mut pulse = shape_pulse(&base, params.upsample, params.carrier_hz, sample_rate_hz)?;
            pulse.phone_id = id;
            Ok(pulse)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn autocorr(x: &[f64], lag: usize) -> f64 {
        x.iter().zip(&x[lag..]).map(|(a, b)| a * b).sum()
    }

    fn autocorr_i(x: &[i8], lag: usize) -> i64 {
        x.iter()
            .zip(&x[lag..])
            .map(|(&a, &b)| i64::from(a) * i64::from(b))
            .sum()
    }

    #[test]
    fn sequence_has_requested_length_and_alphabet() {
        let s = gen_pn_sequence(1000, 7).unwrap();
        assert_eq!(s.len(), 1000);
        assert!(s.values.iter().all(|&v| v == 1 || v == -1));
        let one = gen_pn_sequence(1, 0).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one.values[0].abs() == 1);
    }

    #[test]
    fn sequence_is_deterministic() {
        assert_eq!(gen_pn_sequence(1000, 7).unwrap(), gen_pn_sequence(1000, 7).unwrap());
        assert_ne!(gen_pn_sequence(1000, 7).unwrap().values, gen_pn_sequence(1000, 8).unwrap().values);
    }

    #[test]
    fn zero_length_rejected() {
        assert!(matches!(gen_pn_sequence(0, 1), Err(crate::Error::InvalidArgument(_))));
    }

    #[test]
    fn sequence_is_roughly_balanced() {
        let s = gen_pn_sequence(10_000, 3).unwrap();
        let sum: i64 = s.values.iter().map(|&v| i64::from(v)).sum();
        // 5 sigma for a fair coin
        assert!(sum.abs() < 500, "sum {sum}");
    }

    #[test]
    fn autocorrelation_sidelobes_small_over_seeds() {
        let l = 1000;
        let mut bad = 0;
        for seed in 0..100 {
            let s = gen_pn_sequence(l, seed).unwrap();
            let worst = (1..l).map(|lag| autocorr_i(&s.values, lag).abs()).max().unwrap();
            if worst as f64 >= 0.15 * l as f64 {
                bad += 1;
            }
        }
        assert!(bad <= 1, "{bad} of 100 seeds exceeded 0.15 L");
    }

    #[test]
    fn cross_correlation_small_for_distinct_seeds() {
        let l = 1000usize;
        for pair in 0..20u64 {
            let a = gen_pn_sequence(l, 2 * pair).unwrap().values;
            let b = gen_pn_sequence(l, 2 * pair + 1).unwrap().values;
            for lag in 0..l {
                let ab: i64 = a[lag..].iter().zip(&b).map(|(&x, &y)| i64::from(x * y)).sum();
                let ba: i64 = b[lag..].iter().zip(&a).map(|(&x, &y)| i64::from(x * y)).sum();
                assert!((ab.abs() as f64) < 0.2 * l as f64);
                assert!((ba.abs() as f64) < 0.2 * l as f64);
            }
        }
    }

    #[test]
    fn shaped_pulse_has_expected_length_and_peak() {
        let base = gen_pn_sequence(1000, 7).unwrap();
        let p = shape_pulse(&base, 4, 17_500.0, 48_000.0).unwrap();
        assert_eq!(p.len(), 4000);
        let peak = p.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        assert!((peak - 1.0).abs() < 1e-12);
        assert!((p.duration_ms() - 4000.0 / 48.0).abs() < 1e-9);
    }

    #[test]
    fn identity_upsampling_keeps_length_and_applies_carrier() {
        let base = gen_pn_sequence(64, 1).unwrap();
        let p = shape_pulse(&base, 1, 17_500.0, 48_000.0).unwrap();
        assert_eq!(p.len(), 64);
        let omega = 2.0 * PI * 17_500.0 / 48_000.0;
        let raw: Vec<f64> = base
            .values
            .iter()
            .enumerate()
            .map(|(n, &b)| f64::from(b) * (omega * n as f64).cos())
            .collect();
        let peak = raw.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        for (got, want) in p.samples.iter().zip(&raw) {
            assert!((got - want / peak).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_is_linear_between_base_values() {
        let base = BinarySequence { values: vec![1, -1, -1], seed: 0 };
        // carrier at fs/4 gives cos = 1, 0, -1, 0, ... so check only n % 4 == 0 and == 2
        let p = shape_pulse(&base, 4, 12_000.0, 48_000.0).unwrap();
        assert_eq!(p.len(), 12);
        // n = 0: envelope 1, cos 1
        assert!((p.samples[0] - 1.0).abs() < 1e-12);
        // n = 2: envelope 0 (midway between 1 and -1)
        assert!(p.samples[2].abs() < 1e-12);
        // n = 4: envelope -1, cos 1
        assert!((p.samples[4] + 1.0).abs() < 1e-12);
        // n = 10: envelope -1 (held), cos(5 pi) = -1
        assert!((p.samples[10] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn carrier_above_nyquist_rejected() {
        let base = gen_pn_sequence(10, 1).unwrap();
        assert!(shape_pulse(&base, 4, 24_000.0, 48_000.0).is_err());
        assert!(shape_pulse(&base, 4, 30_000.0, 48_000.0).is_err());
        assert!(shape_pulse(&base, 0, 17_500.0, 48_000.0).is_err());
    }

    #[test]
    fn shaped_autocorrelation_main_peak_dominates() {
        // Exhaustive lag scan; sidelobes are the local maxima of |R| away from lag 0.
        let base = gen_pn_sequence(1000, 7).unwrap();
        let p = shape_pulse(&base, 4, 17_500.0, 48_000.0).unwrap();
        let n = p.len();
        let r: Vec<f64> = (0..n).map(|lag| autocorr(&p.samples, lag).abs()).collect();
        let main = r[0];
        assert!(r[1..].iter().all(|&v| v < main));
        let second = (1..n - 1)
            .filter(|&k| r[k] >= r[k - 1] && r[k] >= r[k + 1])
            .map(|k| r[k])
            .fold(0.0f64, f64::max);
        assert!(second < 0.5 * main, "second peak {second} vs main {main}");
    }

    #[test]
    fn phone_pulses_are_distinct() {
        let pulses = phone_pulses(4, 99, &PulseParams::default(), 48_000.0).unwrap();
        assert_eq!(pulses.len(), 4);
        for (i, p) in pulses.iter().enumerate() {
            assert_eq!(p.phone_id, i);
            assert_eq!(p.base.seed, 99 ^ i as u64);
            assert!(p.samples.iter().all(|s| s.abs() <= 1.0));
        }
        assert_ne!(pulses[0].base.values, pulses[1].base.values);
    }
}
