//! Emission schedules.
//!
//! Every phone starts recording when the broadcast arrives, emits its pulse
//! `t1[i]` ms later and stops after `t2` ms. A guard delay absorbs late
//! recording starts and early stops; a per-phone spacing keeps pulses apart.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const DEFAULT_D_DELAY_MS: f64 = 100.0;
/// A 4000-sample pulse at 48 kHz lasts 83.3 ms.
pub const DEFAULT_DELTA_MS: f64 = 85.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(rename = "t1_ms")]
    pub t1: Vec<f64>,
    #[serde(rename = "t2_ms")]
    pub t2: f64,
    #[serde(rename = "d_delay_ms")]
    pub d_delay: f64,
    #[serde(rename = "d0_ms")]
    pub d0: f64,
    pub n_phones: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConstraints {
    /// Bound on OS and network delay.
    pub delay_os_ms: f64,
    /// Minimum separation between emission offsets.
    pub delta_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    /// Phone would emit before every phone is guaranteed to be recording.
    LateRecording { phone: usize, t1_ms: f64 },
    /// Recording could stop before the phone's own emission.
    EarlyStop { phone: usize, margin_ms: f64 },
    /// Two emission offsets closer than delta.
    Collision { a: usize, b: usize, gap_ms: f64 },
}

impl Violation {
    /// Which of the three schedule conditions this violates (1-based).
    pub fn condition(&self) -> u8 {
        match self {
            Violation::LateRecording { .. } => 1,
            Violation::EarlyStop { .. } => 2,
            Violation::Collision { .. } => 3,
        }
    }
}

/// Phone `i` (0-based) emits at `d_delay + (i + 1) * d0` with
/// `d0 = (t2 - 2 d_delay) / N`, so the last phone keeps a full `d_delay`
/// before the stop.
pub fn make_schedule(n_phones: usize, d_delay_ms: f64, total_t2_ms: f64) -> Result<Schedule> {
    if n_phones < 2 {
        return Err(invalid(format!("need at least 2 phones, got {n_phones}")));
    }
    if !(d_delay_ms >= 0.0) {
        return Err(invalid(format!("d_delay {d_delay_ms} ms must be non-negative")));
    }
    if !(total_t2_ms > 2.0 * d_delay_ms) {
        return Err(invalid(format!(
            "t2 = {total_t2_ms} ms must exceed 2 * d_delay = {} ms",
            2.0 * d_delay_ms
        )));
    }
    let d0 = (total_t2_ms - 2.0 * d_delay_ms) / n_phones as f64;
    let t1 = (0..n_phones).map(|i| d_delay_ms + (i + 1) as f64 * d0).collect();
    Ok(Schedule {
        t1,
        t2: total_t2_ms,
        d_delay: d_delay_ms,
        d0,
        n_phones,
    })
}

/// Smallest schedule whose pulses stay collision-free and inside every
/// window when every start, emission and stop may be delayed by up to
/// `delay_os_ms`.
///
/// Each emission needs `delay_os + pulse + propagation` of room, both
/// before the next emission and before the stop.
pub fn plan_schedule(
    n_phones: usize,
    pulse_ms: f64,
    max_propagation_ms: f64,
    delay_os_ms: f64,
    margin_ms: f64,
) -> Result<Schedule> {
    let slot = delay_os_ms + pulse_ms + max_propagation_ms + margin_ms;
    let d_delay = slot.max(DEFAULT_D_DELAY_MS);
    make_schedule(n_phones, d_delay, 2.0 * d_delay + n_phones as f64 * slot)
}

/// Checks the three schedule conditions; an empty list means the schedule
/// is valid. All comparisons are strict.
pub fn validate_schedule(s: &Schedule, c: &ScheduleConstraints) -> Vec<Violation> {
    let mut out = Vec::new();
    for (phone, &t1) in s.t1.iter().enumerate() {
        if !(t1 > c.delay_os_ms) {
            out.push(Violation::LateRecording { phone, t1_ms: t1 });
        }
    }
    if let Some((phone, margin)) = s
        .t1
        .iter()
        .enumerate()
        .map(|(i, &t1)| (i, s.t2 - t1))
        .min_by(|a, b| a.1.total_cmp(&b.1))
    {
        if !(margin > c.delay_os_ms) {
            out.push(Violation::EarlyStop { phone, margin_ms: margin });
        }
    }
    for a in 0..s.t1.len() {
        for b in a + 1..s.t1.len() {
            let gap = (s.t1[a] - s.t1[b]).abs();
            if !(gap > c.delta_ms) {
                out.push(Violation::Collision { a, b, gap_ms: gap });
            }
        }
    }
    out
}
