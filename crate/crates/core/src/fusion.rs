//! Fusing repeated measurement sets into one s-stress problem.
//!
//! Distances are averaged per pair over the repetitions that measured it.
//! With the optimal strategy each pair is weighted by the inverse square of
//! its sample variance, normalized so the weight matrix sums to one.

use serde::{Deserialize, Serialize};

use crate::edm::Edm;
use crate::error::{invalid, Result};
use crate::mds::SStressProblem;
use crate::ranging::DistanceMeasurement;

/// (5 mm)^2
pub const DEFAULT_VARIANCE_FLOOR: f64 = 0.005 * 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub measurements: Vec<DistanceMeasurement>,
}

impl MeasurementSet {
    pub fn new(measurements: Vec<DistanceMeasurement>) -> Result<Self> {
        let Some(first) = measurements.first() else {
            return Err(invalid("a measurement set needs at least one member"));
        };
        let n = first.n_phones;
        if measurements.iter().any(|m| m.n_phones != n) {
            return Err(invalid("all measurements must cover the same phones"));
        }
        Ok(Self { measurements })
    }

    /// Repetition count.
    pub fn m(&self) -> usize {
        self.measurements.len()
    }

    pub fn n_phones(&self) -> usize {
        self.measurements[0].n_phones
    }

    /// Measured values of pair `(i, j)` across repetitions.
    pub fn samples(&self, i: usize, j: usize) -> Vec<f64> {
        self.measurements.iter().filter_map(|m| m.get(i, j)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    Equal,
    #[default]
    Optimal,
}

/// Which quantity's spread sets the optimal weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceBasis {
    #[default]
    Distance,
    SquaredDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionParams {
    pub strategy: FusionStrategy,
    pub variance_floor: f64,
    pub variance_basis: VarianceBasis,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            strategy: FusionStrategy::Optimal,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            variance_basis: VarianceBasis::Distance,
        }
    }
}

/// Fused problem plus the per-pair statistics behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fused {
    pub problem: SStressProblem,
    pub mean_distance: Vec<Vec<Option<f64>>>,
    /// Sample variance (m - 1 denominator) before flooring; `None` below two samples.
    pub sample_variance: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<usize>>,
}

fn sample_variance(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some(values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Weighted s-stress problem from repeated measurements.
pub fn fuse(ms: &MeasurementSet, strategy: FusionStrategy, variance_floor: f64, dim: usize) -> Result<SStressProblem> {
    let params = FusionParams {
        strategy,
        variance_floor,
        ..FusionParams::default()
    };
    Ok(fuse_detailed(ms, &params, dim)?.problem)
}

pub fn fuse_detailed(ms: &MeasurementSet, params: &FusionParams, dim: usize) -> Result<Fused> {
    if !(params.variance_floor > 0.0) {
        return Err(invalid(format!("variance floor {} must be positive", params.variance_floor)));
    }
    if params.strategy == FusionStrategy::Optimal && ms.m() < 2 {
        return Err(invalid("optimal weighting needs at least two repetitions"));
    }
    let n = ms.n_phones();
    let mut fused = DistanceMeasurement::empty(n);
    let mut mean_distance = vec![vec![None; n]; n];
    let mut sample_var = vec![vec![None; n]; n];
    let mut counts = vec![vec![0; n]; n];
    // spread per measured pair in the chosen basis
    let mut spread: Vec<(usize, usize, Option<f64>)> = Vec::new();

    for i in 0..n {
        for j in i + 1..n {
            let d = ms.samples(i, j);
            counts[i][j] = d.len();
            counts[j][i] = d.len();
            if d.is_empty() {
                continue;
            }
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            fused.set(i, j, mean);
            mean_distance[i][j] = Some(mean);
            mean_distance[j][i] = Some(mean);
            let var = sample_variance(&d);
            sample_var[i][j] = var;
            sample_var[j][i] = var;
            let basis_var = match params.variance_basis {
                VarianceBasis::Distance => var,
                VarianceBasis::SquaredDistance => {
                    sample_variance(&d.iter().map(|v| v * v).collect::<Vec<_>>())
                }
            };
            spread.push((i, j, basis_var));
        }
    }

    let mut weights = vec![vec![0.0; n]; n];
    match params.strategy {
        FusionStrategy::Equal => {
            for &(i, j, _) in &spread {
                weights[i][j] = 1.0;
                weights[j][i] = 1.0;
            }
        }
        FusionStrategy::Optimal => {
            // pairs seen once get the widest spread observed anywhere
            let widest = spread
                .iter()
                .filter_map(|s| s.2)
                .fold(params.variance_floor, f64::max);
            let raw: Vec<(usize, usize, f64)> = spread
                .iter()
                .map(|&(i, j, v)| {
                    let var = v.unwrap_or(widest).max(params.variance_floor);
                    (i, j, 1.0 / (var * var))
                })
                .collect();
            let total: f64 = 2.0 * raw.iter().map(|r| r.2).sum::<f64>();
            for (i, j, w) in raw {
                weights[i][j] = w / total;
                weights[j][i] = w / total;
            }
        }
    }

    let problem = SStressProblem::new(Edm::from_distances(&fused), weights, dim)?;
    Ok(Fused {
        problem,
        mean_distance,
        sample_variance: sample_var,
        counts,
    })
}
