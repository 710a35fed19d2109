//! Multi-phone session simulator.
//!
//! Timing is drawn first ([`plan_session`]) and recordings are synthesized
//! from it ([`simulate_session`]). Every phone starts recording, emits and
//! stops with its own uniform OS delay; pulse `j` reaches phone `i` after the
//! rounded propagation delay and is scaled by `1 / max(d, 0.1)^alpha`.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{detect_session, DetectionReport, Recording, ToaMatrix};
use crate::edm::PointConfig;
use crate::error::{invalid, Result};
use crate::fusion::MeasurementSet;
use crate::pulse::PnPulse;
use crate::ranging::{toa_to_distances, DistanceMeasurement, DEFAULT_SPEED_MPS};
use crate::schedule::Schedule;
use crate::seed;

const TIMING_STREAM: u64 = 0x7469_6d65;
const PATH_STREAM: u64 = 0x7061_7468;
const NOISE_STREAM: u64 = 0x6e6f_6973;
const REPETITION_STREAM: u64 = 0x7265_7073;

/// Distances below this are treated as this for attenuation.
pub const MIN_ATTENUATION_DISTANCE_M: f64 = 0.1;

/// Extra delayed copy of every arriving pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoTap {
    pub delay_samples: usize,
    pub gain: f64,
}

/// Range noise of one unordered pair, overriding `range_noise_std_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkNoise {
    pub i: usize,
    pub j: usize,
    pub std_m: f64,
}

/// Dropout probability of one phone, overriding `drop_prob`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhoneDrop {
    pub phone: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelModel {
    pub speed_mps: f64,
    /// Additive white Gaussian noise, amplitude units.
    pub noise_std: f64,
    pub attenuation_exponent: f64,
    /// Upper bound of the uniform delay added to every start, emission and stop.
    pub os_jitter_ms_max: f64,
    pub drop_prob: f64,
    pub seed: u64,
    /// Target standard deviation of an ETOA distance caused by path-length
    /// perturbation. Each direction of a link is perturbed independently by
    /// `sqrt(2)` times this, so the two-way average has this spread.
    pub range_noise_std_m: f64,
    pub link_noise: Vec<LinkNoise>,
    pub phone_drop: Vec<PhoneDrop>,
    pub echo: Option<EchoTap>,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            speed_mps: DEFAULT_SPEED_MPS,
            noise_std: 0.0,
            attenuation_exponent: 1.0,
            os_jitter_ms_max: 0.0,
            drop_prob: 0.0,
            seed: 0,
            range_noise_std_m: 0.0,
            link_noise: Vec::new(),
            phone_drop: Vec::new(),
            echo: None,
        }
    }
}

fn probability(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl ChannelModel {
    pub fn validate(&self, n_phones: usize) -> Result<()> {
        let non_negative = [
            ("speed_mps", self.speed_mps),
            ("noise_std", self.noise_std),
            ("attenuation_exponent", self.attenuation_exponent),
            ("os_jitter_ms_max", self.os_jitter_ms_max),
            ("range_noise_std_m", self.range_noise_std_m),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        if self.speed_mps == 0.0 {
            return Err(invalid("speed_mps must be positive"));
        }
        if !probability(self.drop_prob) {
            return Err(invalid(format!("drop_prob = {} must lie in [0, 1]", self.drop_prob)));
        }
        for l in &self.link_noise {
            if l.i >= n_phones || l.j >= n_phones || l.i == l.j {
                return Err(invalid(format!("link ({}, {}) is not a pair of distinct phones", l.i, l.j)));
            }
            if !(l.std_m >= 0.0 && l.std_m.is_finite()) {
                return Err(invalid(format!("link ({}, {}) std {} must be non-negative", l.i, l.j, l.std_m)));
            }
        }
        for d in &self.phone_drop {
            if d.phone >= n_phones || !probability(d.prob) {
                return Err(invalid(format!("phone_drop entry for phone {} is invalid", d.phone)));
            }
        }
        if let Some(e) = self.echo {
            if !e.gain.is_finite() {
                return Err(invalid("echo gain must be finite"));
            }
        }
        Ok(())
    }

    /// Distance standard deviation of pair `(i, j)`.
    pub fn range_noise(&self, i: usize, j: usize) -> f64 {
        self.link_noise
            .iter()
            .rev()
            .find(|l| (l.i, l.j) == (i, j) || (l.j, l.i) == (i, j))
            .map_or(self.range_noise_std_m, |l| l.std_m)
    }

    pub fn drop_probability(&self, phone: usize) -> f64 {
        self.phone_drop
            .iter()
            .rev()
            .find(|d| d.phone == phone)
            .map_or(self.drop_prob, |d| d.prob)
    }
}

/// Ground truth of one session on the global sample timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTruth {
    pub positions: PointConfig,
    pub schedule: Schedule,
    pub sample_rate_hz: f64,
    pub pulse_len: usize,
    pub dropped: Vec<bool>,
    /// Recording window `[start, stop)` of every phone.
    pub windows: Vec<(i64, i64)>,
    pub emit_samples_global: Vec<i64>,
    /// Global arrival of pulse `j` at phone `i`; `None` if either is dropped.
    pub arrival_global: Vec<Vec<Option<i64>>>,
    /// Arrival in recording `i`'s local time when the whole pulse lies inside
    /// the window.
    pub true_toa: ToaMatrix,
}

impl SessionTruth {
    pub fn n_phones(&self) -> usize {
        self.dropped.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SessionEvent {
    /// Pulse `pulse` not entirely inside recording `recording`.
    MissedWindow { recording: usize, pulse: usize },
    /// Pulses `a` and `b` overlap inside recording `recording`.
    Collision { recording: usize, a: usize, b: usize },
}

fn ms_to_samples(ms: f64, fs: f64) -> i64 {
    (ms * fs / 1000.0).round() as i64
}

/// Draws dropouts, OS delays and path perturbations and derives every
/// arrival. No audio is produced.
pub fn plan_session(
    positions: &PointConfig,
    schedule: &Schedule,
    pulse_len: usize,
    sample_rate_hz: f64,
    channel: &ChannelModel,
) -> Result<SessionTruth> {
    let n = positions.len();
    if schedule.n_phones != n || schedule.t1.len() != n {
        return Err(invalid(format!(
            "schedule covers {} phones, geometry has {n}",
            schedule.n_phones
        )));
    }
    if pulse_len == 0 || !(sample_rate_hz > 0.0) {
        return Err(invalid("pulse length and sample rate must be positive"));
    }
    channel.validate(n)?;

    let mut rng = seed::rng(seed::derive(channel.seed, TIMING_STREAM, 0));
    let mut dropped = Vec::with_capacity(n);
    let mut windows = Vec::with_capacity(n);
    let mut emit = Vec::with_capacity(n);
    for i in 0..n {
        // fixed number of draws per phone keeps streams aligned across settings
        let u_drop: f64 = rng.random();
        let jit: [f64; 3] = std::array::from_fn(|_| channel.os_jitter_ms_max * rng.random::<f64>());
        dropped.push(u_drop < channel.drop_probability(i));
        windows.push((
            ms_to_samples(jit[0], sample_rate_hz),
            ms_to_samples(schedule.t2 + jit[2], sample_rate_hz),
        ));
        emit.push(ms_to_samples(schedule.t1[i] + jit[1], sample_rate_hz));
    }

    let mut path_rng = seed::rng(seed::derive(channel.seed, PATH_STREAM, 0));
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut arrival = vec![vec![None; n]; n];
    for i in 0..n {
        for j in 0..n {
            let z: f64 = unit.sample(&mut path_rng);
            if dropped[i] || dropped[j] {
                continue;
            }
            let delay = if i == j {
                0
            } else {
                let path = positions.dist(i, j) + z * channel.range_noise(i, j) * std::f64::consts::SQRT_2;
                (path.max(0.0) * sample_rate_hz / channel.speed_mps).round() as i64
            };
            arrival[i][j] = Some(emit[j] + delay);
        }
    }

    let mut true_toa = ToaMatrix::empty(n);
    let len = pulse_len as i64;
    for i in 0..n {
        let (start, stop) = windows[i];
        for j in 0..n {
            if let Some(a) = arrival[i][j] {
                if a >= start && a + len <= stop {
                    true_toa.set(i, j, Some(a - start));
                }
            }
        }
    }

    Ok(SessionTruth {
        positions: positions.clone(),
        schedule: schedule.clone(),
        sample_rate_hz,
        pulse_len,
        dropped,
        windows,
        emit_samples_global: emit,
        arrival_global: arrival,
        true_toa,
    })
}

/// Missed-window and collision events of a planned session.
pub fn session_events(truth: &SessionTruth) -> Vec<SessionEvent> {
    let n = truth.n_phones();
    let len = truth.pulse_len as i64;
    let mut out = Vec::new();
    for i in 0..n {
        if truth.dropped[i] {
            continue;
        }
        for j in 0..n {
            if truth.arrival_global[i][j].is_some() && truth.true_toa.get(i, j).is_none() {
                out.push(SessionEvent::MissedWindow { recording: i, pulse: j });
            }
        }
        for a in 0..n {
            for b in a + 1..n {
                if let (Some(ta), Some(tb)) = (truth.arrival_global[i][a], truth.arrival_global[i][b]) {
                    if ta < tb + len && tb < ta + len {
                        out.push(SessionEvent::Collision { recording: i, a, b });
                    }
                }
            }
        }
    }
    out
}

fn add_scaled(buf: &mut [f64], pulse: &[f64], offset: i64, gain: f64) {
    let len = buf.len() as i64;
    let lo = offset.max(0);
    let hi = (offset + pulse.len() as i64).min(len);
    for n in lo..hi {
        buf[n as usize] += gain * pulse[(n - offset) as usize];
    }
}

/// Synthesizes the recordings of a planned session. Dropped phones produce
/// no recording.
pub fn synthesize(truth: &SessionTruth, pulses: &[PnPulse], channel: &ChannelModel) -> Result<Vec<Recording>> {
    let n = truth.n_phones();
    if pulses.len() != n {
        return Err(invalid(format!("{} pulses for {n} phones", pulses.len())));
    }
    if pulses.iter().any(|p| p.len() != truth.pulse_len) {
        return Err(invalid("pulse lengths differ from the planned length"));
    }
    let noise = Normal::new(0.0, channel.noise_std).map_err(|e| invalid(e.to_string()))?;
    let recordings = (0..n)
        .into_par_iter()
        .filter(|&i| !truth.dropped[i])
        .map(|i| {
            let (start, stop) = truth.windows[i];
            let mut samples = vec![0.0; (stop - start).max(0) as usize];
            for j in 0..n {
                let Some(arrival) = truth.arrival_global[i][j] else {
                    continue;
                };
                let gain = if i == j {
                    1.0
                } else {
                    truth.positions.dist(i, j).max(MIN_ATTENUATION_DISTANCE_M).powf(-channel.attenuation_exponent)
                };
                let offset = arrival - start;
                add_scaled(&mut samples, &pulses[j].samples, offset, gain);
                if let Some(echo) = channel.echo {
                    add_scaled(&mut samples, &pulses[j].samples, offset + echo.delay_samples as i64, gain * echo.gain);
                }
            }
            if channel.noise_std > 0.0 {
                let mut rng = seed::rng(seed::derive(channel.seed, NOISE_STREAM, i as u64));
                for s in &mut samples {
                    *s += noise.sample(&mut rng);
                }
            }
            Recording {
                phone_id: i,
                samples,
                sample_rate_hz: truth.sample_rate_hz,
                start_offset_samples: start,
            }
        })
        .collect();
    Ok(recordings)
}

/// Plans and synthesizes one session.
pub fn simulate_session(
    positions: &PointConfig,
    schedule: &Schedule,
    pulses: &[PnPulse],
    channel: &ChannelModel,
) -> Result<(Vec<Recording>, SessionTruth)> {
    let Some(first) = pulses.first() else {
        return Err(invalid("no pulses"));
    };
    if pulses.len() != positions.len() {
        return Err(invalid(format!("{} pulses for {} phones", pulses.len(), positions.len())));
    }
    let truth = plan_session(positions, schedule, first.len(), first.sample_rate_hz, channel)?;
    let recordings = synthesize(&truth, pulses, channel)?;
    Ok((recordings, truth))
}

/// Everything a repetition needs besides the geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionParams {
    pub schedule: Schedule,
    pub pulses: Vec<PnPulse>,
    pub channel: ChannelModel,
    pub min_score_ratio: f64,
    pub max_range_m: f64,
}

/// Outcome of one simulated and processed session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub channel_seed: u64,
    pub truth: SessionTruth,
    pub detection: DetectionReport,
    pub distances: DistanceMeasurement,
}

/// Channel seed of repetition `k`.
pub fn repetition_seed(channel_seed: u64, k: usize) -> u64 {
    seed::derive(channel_seed, REPETITION_STREAM, k as u64)
}

/// Channel of repetition `k`: the base channel reseeded.
pub fn repetition_channel(channel: &ChannelModel, k: usize) -> ChannelModel {
    ChannelModel {
        seed: repetition_seed(channel.seed, k),
        ..channel.clone()
    }
}

/// Simulates, detects and ranges repetition `k`.
pub fn run_repetition(positions: &PointConfig, params: &SessionParams, k: usize) -> Result<Repetition> {
    let channel = repetition_channel(&params.channel, k);
    let (recordings, truth) = simulate_session(positions, &params.schedule, &params.pulses, &channel)?;
    let detection = detect_session(&recordings, &params.pulses, params.min_score_ratio)?;
    let distances = toa_to_distances(&detection.toa, truth.sample_rate_hz, channel.speed_mps, params.max_range_m)?;
    Ok(Repetition {
        channel_seed: channel.seed,
        truth,
        detection,
        distances,
    })
}

/// Runs `count` independent repetitions and keeps every stage.
pub fn run_repetitions(positions: &PointConfig, count: usize, params: &SessionParams) -> Result<Vec<Repetition>> {
    if count == 0 {
        return Err(invalid("repetition count must be at least 1"));
    }
    (0..count)
        .into_par_iter()
        .map(|k| run_repetition(positions, params, k))
        .collect()
}

/// Distance sets of `count` independent repetitions.
pub fn run_repeated(positions: &PointConfig, count: usize, params: &SessionParams) -> Result<MeasurementSet> {
    let reps = run_repetitions(positions, count, params)?;
    MeasurementSet::new(reps.into_iter().map(|r| r.distances).collect())
}

/// Little-endian 32-bit float PCM of a recording.
pub fn pcm_f32le(rec: &Recording) -> Vec<u8> {
    rec.samples.iter().flat_map(|&s| (s as f32).to_le_bytes()).collect()
}
