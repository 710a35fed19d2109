//! End-to-end scenario: schedule, simulate, detect, range, fuse, solve, align.

use anyhow::Context as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sonoloc::detect::ToaMatrix;
use sonoloc::edm::PointConfig;
use sonoloc::eval::{align_and_score, AlignmentResult};
use sonoloc::fusion::{fuse_detailed, FusionParams, FusionStrategy, MeasurementSet};
use sonoloc::mds::sstress_solve;
use sonoloc::pulse::phone_pulses;
use sonoloc::ranging::DistanceMeasurement;
use sonoloc::schedule::Schedule;
use sonoloc::sim::{repetition_channel, run_repetitions, simulate_session, Repetition, SessionParams};
use sonoloc::{seed, Error};

use crate::config::{ScenarioConfig, ValidationErrors};

const PULSE_STREAM: u64 = 0x7075_6c73;
const CHANNEL_STREAM: u64 = 0x6368_616e;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
    pub prng: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            prng: seed::PRNG_NAME.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionSummary {
    pub index: usize,
    pub channel_seed: u64,
    pub dropped: Vec<bool>,
    pub toa: ToaMatrix,
    pub missed: Vec<(usize, usize)>,
    pub distances: DistanceMeasurement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedSummary {
    pub strategy: FusionStrategy,
    pub mean_distance: Vec<Vec<Option<f64>>>,
    pub sample_variance: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<usize>>,
    pub weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub estimated_positions: Vec<Vec<f64>>,
    pub final_cost: f64,
    pub sweeps: usize,
    pub cost_trace: Vec<f64>,
}

/// Localization failure reported inside the result instead of aborting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioError {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub required: Option<usize>,
}

impl From<&Error> for ScenarioError {
    fn from(e: &Error) -> Self {
        let (kind, point, degree, required) = match *e {
            Error::InvalidArgument(_) => ("invalid_argument", None, None, None),
            Error::NotEdm(_) => ("not_edm", None, None, None),
            Error::UnderConstrained { point, degree, required } => {
                ("under_constrained", Some(point), Some(degree), Some(required))
            }
        };
        Self {
            kind: kind.to_string(),
            message: e.to_string(),
            point,
            degree,
            required,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub tool: ToolInfo,
    pub config: ScenarioConfig,
    pub truth_positions: Vec<Vec<f64>>,
    pub schedule: Schedule,
    pub pulse_seed: u64,
    pub repetitions: Vec<RepetitionSummary>,
    pub fused: Option<FusedSummary>,
    pub solution: Option<SolutionSummary>,
    pub alignment: Option<AlignmentResult>,
    pub error: Option<ScenarioError>,
}

impl ScenarioResult {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serializes");
        s.push('\n');
        s
    }

    pub fn mean_error(&self) -> Option<f64> {
        self.alignment.as_ref().map(|a| a.mean_error)
    }
}

/// Everything derived from a validated configuration before simulation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub positions: PointConfig,
    pub pulse_seed: u64,
    pub params: SessionParams,
}

pub fn prepare(cfg: &ScenarioConfig) -> Result<Prepared, ValidationErrors> {
    cfg.validate()?;
    let positions = cfg.positions()?;
    let schedule = cfg.build_schedule().expect("validated schedule");
    let pulse_seed = seed::derive(cfg.master_seed, PULSE_STREAM, 0);
    let pulses = phone_pulses(positions.len(), pulse_seed, &cfg.pulse, cfg.sample_rate_hz).expect("validated pulse");
    let mut channel = cfg.channel.clone();
    channel.seed = seed::derive(cfg.master_seed, CHANNEL_STREAM, cfg.channel.seed);
    Ok(Prepared {
        positions,
        pulse_seed,
        params: SessionParams {
            schedule,
            pulses,
            channel,
            min_score_ratio: cfg.detection.min_score_ratio,
            max_range_m: cfg.detection.max_range_m,
        },
    })
}

struct Localized {
    fused: Option<FusedSummary>,
    solution: Option<SolutionSummary>,
    alignment: Option<AlignmentResult>,
    error: Option<ScenarioError>,
}

fn localize(cfg: &ScenarioConfig, positions: &PointConfig, set: &MeasurementSet, fusion: &FusionParams) -> Localized {
    let mut out = Localized {
        fused: None,
        solution: None,
        alignment: None,
        error: None,
    };
    let fused = match fuse_detailed(set, fusion, positions.dim) {
        Ok(f) => f,
        Err(e) => {
            out.error = Some(ScenarioError::from(&e));
            return out;
        }
    };
    out.fused = Some(FusedSummary {
        strategy: fusion.strategy,
        mean_distance: fused.mean_distance,
        sample_variance: fused.sample_variance,
        counts: fused.counts,
        weights: fused.problem.weights.clone(),
    });
    let solution = match sstress_solve(&fused.problem, &cfg.solver) {
        Ok(s) => s,
        Err(e) => {
            out.error = Some(ScenarioError::from(&e));
            return out;
        }
    };
    match align_and_score(&solution.x, positions) {
        Ok(a) => out.alignment = Some(a),
        Err(e) => out.error = Some(ScenarioError::from(&e)),
    }
    out.solution = Some(SolutionSummary {
        estimated_positions: solution.x.x.clone(),
        final_cost: solution.final_cost(),
        sweeps: solution.sweeps(),
        cost_trace: solution.cost_trace,
    });
    out
}

fn summarize(reps: &[Repetition]) -> Vec<RepetitionSummary> {
    reps.iter()
        .enumerate()
        .map(|(index, r)| RepetitionSummary {
            index,
            channel_seed: r.channel_seed,
            dropped: r.truth.dropped.clone(),
            toa: r.detection.toa.clone(),
            missed: r.detection.missed.clone(),
            distances: r.distances.clone(),
        })
        .collect()
}

fn measurement_set(reps: &[Repetition]) -> anyhow::Result<MeasurementSet> {
    Ok(MeasurementSet::new(reps.iter().map(|r| r.distances.clone()).collect())?)
}

/// Runs the full pipeline. Configuration and simulation failures are
/// errors; fusion and localization failures are recorded in the result.
pub fn run_scenario(cfg: &ScenarioConfig) -> anyhow::Result<ScenarioResult> {
    let prep = prepare(cfg)?;
    let reps = run_repetitions(&prep.positions, cfg.repetitions, &prep.params).context("simulating sessions")?;
    let set = measurement_set(&reps)?;
    let loc = localize(cfg, &prep.positions, &set, &cfg.fusion);
    Ok(ScenarioResult {
        tool: ToolInfo::current(),
        config: cfg.clone(),
        truth_positions: prep.positions.x.clone(),
        schedule: prep.params.schedule.clone(),
        pulse_seed: prep.pulse_seed,
        repetitions: summarize(&reps),
        fused: loc.fused,
        solution: loc.solution,
        alignment: loc.alignment,
        error: loc.error,
    })
}

/// Recordings of repetition `k`, as produced inside [`run_scenario`].
pub fn recordings(cfg: &ScenarioConfig, k: usize) -> anyhow::Result<Vec<sonoloc::detect::Recording>> {
    let prep = prepare(cfg)?;
    let channel = repetition_channel(&prep.params.channel, k);
    let (recs, _) = simulate_session(&prep.positions, &prep.params.schedule, &prep.params.pulses, &channel)?;
    Ok(recs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingRow {
    pub seed: u64,
    pub equal_error: Option<f64>,
    pub optimal_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingComparison {
    pub rows: Vec<WeightingRow>,
    /// Seeds where both strategies produced an estimate.
    pub compared: usize,
    pub mean_equal_error: f64,
    pub mean_optimal_error: f64,
    /// `optimal / equal`.
    pub ratio: f64,
    /// `1 - ratio`.
    pub improvement: f64,
}

/// Runs both weighting strategies on the same simulated measurements for
/// every seed (used as `master_seed`).
pub fn compare_weighting(cfg: &ScenarioConfig, seeds: &[u64]) -> anyhow::Result<WeightingComparison> {
    if cfg.repetitions < 2 {
        anyhow::bail!("repetitions: weighting comparison needs at least 2");
    }
    let rows = seeds
        .par_iter()
        .map(|&s| {
            let cfg = ScenarioConfig {
                master_seed: s,
                ..cfg.clone()
            };
            let prep = prepare(&cfg)?;
            let reps = run_repetitions(&prep.positions, cfg.repetitions, &prep.params)?;
            let set = measurement_set(&reps)?;
            let error = |strategy| {
                let fusion = FusionParams { strategy, ..cfg.fusion };
                localize(&cfg, &prep.positions, &set, &fusion)
                    .alignment
                    .map(|a| a.mean_error)
            };
            Ok(WeightingRow {
                seed: s,
                equal_error: error(FusionStrategy::Equal),
                optimal_error: error(FusionStrategy::Optimal),
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let both: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r.equal_error?, r.optimal_error?)))
        .collect();
    let compared = both.len();
    let mean = |f: fn(&(f64, f64)) -> f64| both.iter().map(f).sum::<f64>() / compared.max(1) as f64;
    let mean_equal_error = mean(|p| p.0);
    let mean_optimal_error = mean(|p| p.1);
    let ratio = if mean_equal_error > 0.0 {
        mean_optimal_error / mean_equal_error
    } else {
        1.0
    };
    Ok(WeightingComparison {
        rows,
        compared,
        mean_equal_error,
        mean_optimal_error,
        ratio,
        improvement: 1.0 - ratio,
    })
}
