//! Arrival detection: sign filter, binary matched filter, peak picking and
//! iterative cancellation.
//!
//! Recordings contain every phone's pulse at very different power levels.
//! Taking the sign of every sample throws the amplitude away, so a weak pulse
//! from across the room scores exactly as well as a phone's own pulse. The
//! strongest remaining correlation peak is accepted, its window is blanked,
//! and the search repeats until nothing clears the score threshold.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::pulse::PnPulse;

/// Minimum accepted peak, as a fraction of the template length.
pub const DEFAULT_MIN_SCORE_RATIO: f64 = 0.35;

/// Below this many multiply-adds the direct correlation beats the FFT.
const DIRECT_WORK_LIMIT: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub phone_id: usize,
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    /// Start of the recording on the simulator's global sample clock. Never
    /// read by detection.
    pub start_offset_samples: i64,
}

/// `entries[i][j]`: sample index, local to recording `i`, at which phone `j`'s
/// pulse starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToaMatrix {
    pub entries: Vec<Vec<Option<i64>>>,
    pub n_phones: usize,
}

impl ToaMatrix {
    pub fn empty(n_phones: usize) -> Self {
        Self {
            entries: vec![vec![None; n_phones]; n_phones],
            n_phones,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<i64> {
        self.entries[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: Option<i64>) {
        self.entries[i][j] = value;
    }

    /// Adds `offset` to every present entry of row `i`, i.e. moves the local
    /// clock of recording `i`.
    pub fn shift_row(&mut self, i: usize, offset: i64) {
        for v in self.entries[i].iter_mut().flatten() {
            *v += offset;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub toa: ToaMatrix,
    /// Accepted peak score divided by template length.
    pub peak_scores: Vec<Vec<Option<f64>>>,
    pub missed: Vec<(usize, usize)>,
    /// Accepted (recording, pulse) pairs in extraction order.
    pub order: Vec<(usize, usize)>,
}

impl DetectionReport {
    fn empty(n_phones: usize) -> Self {
        Self {
            toa: ToaMatrix::empty(n_phones),
            peak_scores: vec![vec![None; n_phones]; n_phones],
            missed: Vec::new(),
            order: Vec::new(),
        }
    }

    /// Accepted scores of row `i` in the order they were extracted.
    pub fn accepted_scores(&self, i: usize) -> Vec<f64> {
        self.order
            .iter()
            .filter(|(r, _)| *r == i)
            .filter_map(|&(r, j)| self.peak_scores[r][j])
            .collect()
    }
}

/// Elementwise sign; zero maps to +1.
pub fn sign_filter(samples: &[f64]) -> Vec<i8> {
    samples
        .iter()
        .map(|&x| if x < 0.0 { -1 } else { 1 })
        .collect()
}

/// Correlation of `signed` against `template` at every full-overlap lag:
/// `score[n] = sum_k signed[n + k] * template[k]`, `n = 0..=len - template_len`.
///
/// Scores are integers stored as `f64`.
pub fn binary_matched_filter(signed: &[i8], template: &[i8]) -> Result<Vec<f64>> {
    check_lengths(signed.len(), template.len())?;
    let lags = signed.len() - template.len() + 1;
    if lags.saturating_mul(template.len()) <= DIRECT_WORK_LIMIT {
        return Ok(correlate_direct(signed, template));
    }
    let bank = MatchedFilterBank::new(vec![template.to_vec()], signed.len());
    Ok(bank.correlate(&bank.spectrum(signed), 0))
}

fn check_lengths(signal: usize, template: usize) -> Result<()> {
    if template == 0 {
        return Err(invalid("empty template"));
    }
    if template > signal {
        return Err(invalid(format!(
            "template of {template} samples longer than signal of {signal}"
        )));
    }
    Ok(())
}

fn correlate_direct(signed: &[i8], template: &[i8]) -> Vec<f64> {
    (0..=signed.len() - template.len())
        .map(|n| {
            signed[n..]
                .iter()
                .zip(template)
                .map(|(&a, &b)| i32::from(a) * i32::from(b))
                .sum::<i32>() as f64
        })
        .collect()
}

/// FFT cross-correlation against a fixed set of ±1 templates, for signals up
/// to a fixed length.
pub struct MatchedFilterBank {
    templates: Vec<Vec<i8>>,
    fft_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Conjugated spectra of the zero-padded templates.
    spectra: Vec<Vec<Complex<f64>>>,
}

impl MatchedFilterBank {
    pub fn new(templates: Vec<Vec<i8>>, max_signal_len: usize) -> Self {
        let fft_len = max_signal_len.max(1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let spectra = templates
            .iter()
            .map(|t| {
                let mut buf = to_complex(t, fft_len);
                forward.process(&mut buf);
                buf.iter_mut().for_each(|c| *c = c.conj());
                buf
            })
            .collect();
        Self {
            templates,
            fft_len,
            forward,
            inverse,
            spectra,
        }
    }

    pub fn template(&self, k: usize) -> &[i8] {
        &self.templates[k]
    }

    pub fn max_signal_len(&self) -> usize {
        self.fft_len
    }

    fn spectrum(&self, signed: &[i8]) -> SignalSpectrum {
        assert!(signed.len() <= self.fft_len, "signal longer than the bank supports");
        let mut bins = to_complex(signed, self.fft_len);
        self.forward.process(&mut bins);
        SignalSpectrum {
            bins,
            signal_len: signed.len(),
        }
    }

    /// Full-overlap scores of template `k`, rounded to the exact integers.
    fn correlate(&self, spectrum: &SignalSpectrum, k: usize) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = spectrum
            .bins
            .iter()
            .zip(&self.spectra[k])
            .map(|(a, b)| a * b)
            .collect();
        self.inverse.process(&mut buf);
        let scale = self.fft_len as f64;
        let lags = spectrum.signal_len + 1 - self.templates[k].len();
        buf[..lags].iter().map(|c| (c.re / scale).round()).collect()
    }
}

struct SignalSpectrum {
    bins: Vec<Complex<f64>>,
    signal_len: usize,
}

fn to_complex(values: &[i8], len: usize) -> Vec<Complex<f64>> {
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for (dst, &v) in buf.iter_mut().zip(values) {
        dst.re = f64::from(v);
    }
    buf
}

/// Largest score and its lag; the earliest lag wins ties.
fn best_peak(scores: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (lag, &s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((lag, s));
        }
    }
    best
}

/// Blanks `len` samples starting at `start`; nothing outside the window changes.
pub fn cancel_window(signed: &mut [i8], start: usize, len: usize) {
    let end = (start + len).min(signed.len());
    if start < end {
        signed[start..end].fill(0);
    }
}

struct RowResult {
    row: usize,
    /// (pulse column, lag, normalized score) in extraction order
    accepted: Vec<(usize, i64, f64)>,
    missed: Vec<usize>,
}

fn detect_row(
    bank: &MatchedFilterBank,
    columns: &[usize],
    recording: &Recording,
    min_score_ratio: f64,
) -> RowResult {
    let mut signed = sign_filter(&recording.samples);
    let mut remaining: Vec<usize> = (0..columns.len()).collect();
    let mut accepted = Vec::new();

    while !remaining.is_empty() {
        let spectrum = bank.spectrum(&signed);
        // (template index, lag, normalized score)
        let mut best: Option<(usize, usize, f64)> = None;
        for &k in &remaining {
            let len = bank.template(k).len();
            if len > signed.len() {
                continue;
            }
            let scores = bank.correlate(&spectrum, k);
            if let Some((lag, score)) = best_peak(&scores) {
                let norm = score / len as f64;
                let better = match best {
                    None => true,
                    Some((bk, blag, bnorm)) => {
                        norm > bnorm
                            || (norm == bnorm && (lag < blag || (lag == blag && k < bk)))
                    }
                };
                if better {
                    best = Some((k, lag, norm));
                }
            }
        }
        let Some((k, lag, norm)) = best else { break };
        if norm < min_score_ratio {
            break;
        }
        accepted.push((columns[k], lag as i64, norm));
        cancel_window(&mut signed, lag, bank.template(k).len());
        remaining.retain(|&r| r != k);
    }

    RowResult {
        row: recording.phone_id,
        accepted,
        missed: remaining.into_iter().map(|k| columns[k]).collect(),
    }
}

fn check_inputs(pulses: &[PnPulse], min_score_ratio: f64) -> Result<()> {
    if pulses.is_empty() {
        return Err(invalid("no pulses to detect"));
    }
    if !(min_score_ratio > 0.0 && min_score_ratio < 1.0) {
        return Err(invalid(format!("min_score_ratio {min_score_ratio} outside (0, 1)")));
    }
    let n = pulses.len();
    let mut seen = vec![false; n];
    for p in pulses {
        if p.phone_id >= n || std::mem::replace(&mut seen[p.phone_id], true) {
            return Err(invalid(format!(
                "pulse phone ids must be a permutation of 0..{n}, got {}",
                p.phone_id
            )));
        }
    }
    Ok(())
}

fn check_recording(rec: &Recording, n: usize) -> Result<()> {
    if rec.phone_id >= n {
        return Err(invalid(format!("recording phone id {} >= {n}", rec.phone_id)));
    }
    if rec.samples.is_empty() {
        return Err(invalid(format!("recording of phone {} is empty", rec.phone_id)));
    }
    Ok(())
}

fn templates(pulses: &[PnPulse]) -> (Vec<Vec<i8>>, Vec<usize>) {
    pulses
        .iter()
        .map(|p| (sign_filter(&p.samples), p.phone_id))
        .unzip()
}

fn assemble(n: usize, rows: Vec<RowResult>, absent_rows: &[usize]) -> DetectionReport {
    let mut report = DetectionReport::empty(n);
    for r in rows {
        for (col, lag, norm) in r.accepted {
            report.toa.set(r.row, col, Some(lag));
            report.peak_scores[r.row][col] = Some(norm);
            report.order.push((r.row, col));
        }
        let mut missed: Vec<(usize, usize)> = r.missed.into_iter().map(|c| (r.row, c)).collect();
        missed.sort_unstable();
        report.missed.extend(missed);
    }
    for &row in absent_rows {
        report.missed.extend((0..n).map(|c| (row, c)));
    }
    report.missed.sort_unstable();
    report
}

/// Finds every pulse in one recording. Only row `recording.phone_id` of the
/// returned report is populated.
pub fn detect_peaks_iterative(
    recording: &Recording,
    pulses: &[PnPulse],
    min_score_ratio: f64,
) -> Result<DetectionReport> {
    check_inputs(pulses, min_score_ratio)?;
    let n = pulses.len();
    check_recording(recording, n)?;
    let (tmpl, columns) = templates(pulses);
    let bank = MatchedFilterBank::new(tmpl, recording.samples.len());
    let row = detect_row(&bank, &columns, recording, min_score_ratio);
    Ok(assemble(n, vec![row], &[]))
}

/// Runs detection over all recordings of a session, one task per recording.
/// Phones that produced no recording contribute an all-missed row.
pub fn detect_session(
    recordings: &[Recording],
    pulses: &[PnPulse],
    min_score_ratio: f64,
) -> Result<DetectionReport> {
    check_inputs(pulses, min_score_ratio)?;
    let n = pulses.len();
    let mut present = vec![false; n];
    for rec in recordings {
        check_recording(rec, n)?;
        if std::mem::replace(&mut present[rec.phone_id], true) {
            return Err(invalid(format!("two recordings for phone {}", rec.phone_id)));
        }
    }
    let max_len = recordings.iter().map(|r| r.samples.len()).max().unwrap_or(1);
    let (tmpl, columns) = templates(pulses);
    let bank = MatchedFilterBank::new(tmpl, max_len);
    let mut rows: Vec<RowResult> = recordings
        .par_iter()
        .map(|rec| detect_row(&bank, &columns, rec, min_score_ratio))
        .collect();
    rows.sort_by_key(|r| r.row);
    let absent: Vec<usize> = (0..n).filter(|&i| !present[i]).collect();
    Ok(assemble(n, rows, &absent))
}
