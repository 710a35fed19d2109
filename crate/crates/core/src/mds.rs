//! Configurations from distance matrices.
//!
//! Complete, exact EDMs go through classical MDS. Incomplete or noisy ones
//! are fit by minimizing the weighted s-stress
//!
//! ```text
//! S(X) = sum_{i,j} w_ij (|x_i - x_j|^2 - d_ij^2)^2
//! ```
//!
//! with alternating coordinate descent: cycle over points and axes, each
//! time moving one scalar coordinate to the exact minimizer of the quartic
//! that `S` restricts to.

use std::f64::consts::PI;

use nalgebra::SymmetricEigen;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::edm::{centered_gram, Edm, PointConfig};
use crate::error::{invalid, Error, Result};
use crate::seed;

pub const DEFAULT_MAX_ITERS: usize = 500;
pub const DEFAULT_REL_TOL: f64 = 1e-8;
/// Leading eigenvalues more negative than this fraction of the largest
/// magnitude make classical MDS refuse the input.
pub const CMDS_NEG_TOL: f64 = 1e-9;
pub const DEFAULT_RESTARTS: usize = 32;
const EXTRAPOLATION_START: f64 = 1.0;
const EXTRAPOLATION_GROWTH: f64 = 2.0;
const EXTRAPOLATION_MAX: f64 = 1024.0;
/// Seed of the random start used when the measurement graph is disconnected.
const FALLBACK_SEED: u64 = 0x5eed;
const RESTART_STREAM: u64 = 0x7265_7374;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SStressProblem {
    pub target: Edm,
    /// Symmetric, zero on the diagonal and wherever the target is unmeasured.
    pub weights: Vec<Vec<f64>>,
    pub dim: usize,
}

impl SStressProblem {
    pub fn new(target: Edm, weights: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        let n = target.n_points;
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if weights.len() != n || weights.iter().any(|r| r.len() != n) {
            return Err(invalid("weight matrix shape does not match the target"));
        }
        for i in 0..n {
            if weights[i][i] != 0.0 {
                return Err(invalid(format!("weight ({i}, {i}) must be zero")));
            }
            for j in 0..n {
                let w = weights[i][j];
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(invalid(format!("weight ({i}, {j}) = {w} is not a finite non-negative number")));
                }
                if w != weights[j][i] {
                    return Err(invalid(format!("weights ({i}, {j}) and ({j}, {i}) differ")));
                }
                if w > 0.0 && !target.mask[i][j] {
                    return Err(invalid(format!("pair ({i}, {j}) is weighted but unmeasured")));
                }
            }
        }
        Ok(Self { target, weights, dim })
    }

    /// Weight 1 on every measured off-diagonal pair.
    pub fn unit_weights(target: Edm, dim: usize) -> Result<Self> {
        let n = target.n_points;
        let weights = (0..n)
            .map(|i| (0..n).map(|j| if i != j && target.mask[i][j] { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(target, weights, dim)
    }

    pub fn n_points(&self) -> usize {
        self.target.n_points
    }

    /// Number of positively weighted pairs each point takes part in.
    pub fn degrees(&self) -> Vec<usize> {
        self.weights
            .iter()
            .map(|row| row.iter().filter(|&&w| w > 0.0).count())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Classical MDS on the shortest-path completion of the measurements.
    Classical,
    /// Uniform in a box sized by the largest measured distance.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Maximum number of full sweeps.
    pub max_iters: usize,
    /// Stop once a sweep lowers the cost by less than this fraction.
    pub rel_tol: f64,
    pub init: Init,
    /// Extra seeded random starts tried when the first run does not reach
    /// zero cost; the lowest final cost wins. Incomplete EDMs give s-stress
    /// local minima.
    pub restarts: usize,
    /// After each sweep, try continuing along the sweep's displacement and
    /// keep the result when it lowers the cost. Speeds up flat valleys.
    pub extrapolation: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            rel_tol: DEFAULT_REL_TOL,
            init: Init::Classical,
            restarts: DEFAULT_RESTARTS,
            extrapolation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SStressSolution {
    pub x: PointConfig,
    /// Cost before the first sweep, then after every sweep.
    pub cost_trace: Vec<f64>,
}

impl SStressSolution {
    pub fn sweeps(&self) -> usize {
        self.cost_trace.len() - 1
    }

    pub fn final_cost(&self) -> f64 {
        *self.cost_trace.last().expect("trace holds the initial cost")
    }
}

/// Top-`dim` spectral embedding of `-(1/2) L D L`.
pub fn classical_mds(d: &Edm, dim: usize) -> Result<PointConfig> {
    if !d.is_complete() {
        return Err(invalid("classical MDS needs every distance measured"));
    }
    if dim == 0 || d.n_points < dim + 1 {
        return Err(invalid(format!(
            "{} points cannot determine a {dim}-dimensional configuration",
            d.n_points
        )));
    }
    embed(d, dim, false)
}

/// Like [`classical_mds`] but clamps negative eigenvalues to zero instead of
/// failing; the input need not be an EDM or have enough points.
pub fn classical_mds_clamped(d: &Edm, dim: usize) -> PointConfig {
    embed(d, dim, true).expect("clamped embedding cannot fail")
}

fn embed(d: &Edm, dim: usize, clamp: bool) -> Result<PointConfig> {
    let n = d.n_points;
    let eig = SymmetricEigen::new(centered_gram(&d.to_matrix()));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let biggest = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut x = vec![vec![0.0; dim]; n];
    for (k, &idx) in order.iter().take(dim).enumerate() {
        let lambda = eig.eigenvalues[idx];
        if lambda < -CMDS_NEG_TOL * biggest && !clamp {
            return Err(Error::NotEdm(format!(
                "eigenvalue {k} of -LDL/2 is {lambda:.3e}, largest magnitude {biggest:.3e}"
            )));
        }
        let s = lambda.max(0.0).sqrt();
        for (i, row) in x.iter_mut().enumerate() {
            row[k] = eig.eigenvectors[(i, idx)] * s;
        }
    }
    Ok(PointConfig { x, dim })
}

fn check_dims(x: &PointConfig, prob: &SStressProblem) -> Result<()> {
    if x.len() != prob.n_points() || x.dim != prob.dim {
        return Err(invalid(format!(
            "configuration is {}x{}, problem expects {}x{}",
            x.len(),
            x.dim,
            prob.n_points(),
            prob.dim
        )));
    }
    Ok(())
}

fn cost_unchecked(x: &PointConfig, prob: &SStressProblem) -> f64 {
    let n = x.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let w = prob.weights[i][j];
            if w > 0.0 {
                let r = x.dist_sq(i, j) - prob.target.dsq[i][j];
                total += w * r * r;
            }
        }
    }
    total
}

/// Weighted s-stress, summed over ordered pairs.
pub fn sstress_cost(x: &PointConfig, prob: &SStressProblem) -> Result<f64> {
    check_dims(x, prob)?;
    Ok(cost_unchecked(x, prob))
}

/// Analytic gradient of [`sstress_cost`], one row per point.
pub fn sstress_gradient(x: &PointConfig, prob: &SStressProblem) -> Result<Vec<Vec<f64>>> {
    check_dims(x, prob)?;
    let n = x.len();
    let mut g = vec![vec![0.0; x.dim]; n];
    for p in 0..n {
        for q in 0..n {
            let w = prob.weights[p][q] + prob.weights[q][p];
            if w == 0.0 {
                continue;
            }
            let r = x.dist_sq(p, q) - prob.target.dsq[p][q];
            for a in 0..x.dim {
                g[p][a] += 4.0 * w * r * (x.x[p][a] - x.x[q][a]);
            }
        }
    }
    Ok(g)
}

/// Terms `w * ((t - u)^2 + e)^2` of the cost restricted to one coordinate.
struct Restricted {
    terms: Vec<(f64, f64, f64)>,
}

impl Restricted {
    fn new(prob: &SStressProblem, x: &PointConfig, point: usize, axis: usize) -> Self {
        let terms = (0..x.len())
            .filter(|&q| q != point)
            .filter_map(|q| {
                let w = prob.weights[point][q] + prob.weights[q][point];
                (w > 0.0).then(|| {
                    let rest: f64 = (0..x.dim)
                        .filter(|&b| b != axis)
                        .map(|b| (x.x[point][b] - x.x[q][b]).powi(2))
                        .sum();
                    (w, x.x[q][axis], rest - prob.target.dsq[point][q])
                })
            })
            .collect();
        Self { terms }
    }

    fn eval(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(w, u, e)| {
                let g = (t - u) * (t - u) + e;
                w * g * g
            })
            .sum()
    }

    fn slope(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(w, u, e)| 4.0 * w * ((t - u) * (t - u) + e) * (t - u))
            .sum()
    }

    fn curvature(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(w, u, e)| 4.0 * w * (3.0 * (t - u) * (t - u) + e))
            .sum()
    }

    /// Stationary points: real roots of the cubic derivative, expanded around
    /// `center` for conditioning.
    fn stationary_points(&self, center: f64) -> Vec<f64> {
        // with s = t - center, each term is w (s^2 + beta s + gamma)^2
        let (mut c3, mut c2, mut c1, mut c0) = (0.0, 0.0, 0.0, 0.0);
        for &(w, u, e) in &self.terms {
            let beta = 2.0 * (center - u);
            let gamma = (center - u) * (center - u) + e;
            // derivative of w (s^4 + 2 beta s^3 + (beta^2 + 2 gamma) s^2 + 2 beta gamma s + gamma^2)
            c3 += 4.0 * w;
            c2 += 6.0 * w * beta;
            c1 += 2.0 * w * (beta * beta + 2.0 * gamma);
            c0 += 2.0 * w * beta * gamma;
        }
        real_cubic_roots(c3, c2, c1, c0)
            .into_iter()
            .map(|s| self.polish(s + center))
            .collect()
    }

    fn polish(&self, mut t: f64) -> f64 {
        for _ in 0..3 {
            let h = self.curvature(t);
            if h == 0.0 {
                break;
            }
            let step = self.slope(t) / h;
            if !step.is_finite() {
                break;
            }
            t -= step;
        }
        t
    }
}

/// Real roots of `a x^3 + b x^2 + c x + d` with `a != 0`.
pub(crate) fn real_cubic_roots(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let (p2, p1, p0) = (b / a, c / a, d / a);
    // depressed cubic y^3 + p y + q with x = y - p2 / 3
    let shift = p2 / 3.0;
    let p = p1 - p2 * p2 / 3.0;
    let q = 2.0 * p2 * p2 * p2 / 27.0 - p2 * p1 / 3.0 + p0;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    if p == 0.0 && q == 0.0 {
        return vec![-shift];
    }
    if disc > 0.0 {
        let sq = disc.sqrt();
        let y = (-q / 2.0 + sq).cbrt() + (-q / 2.0 - sq).cbrt();
        vec![y - shift]
    } else {
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = ((3.0 * q) / (p * r)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        (0..3)
            .map(|k| r * (phi - 2.0 * PI * k as f64 / 3.0).cos() - shift)
            .collect()
    }
}

/// Exact minimizer of the s-stress over coordinate `axis` of `point`, all
/// other coordinates held fixed. Returns the current value when the point
/// has no weighted pairs or no stationary point improves on it.
pub fn coordinate_update(prob: &SStressProblem, current: &PointConfig, point: usize, axis: usize) -> f64 {
    let now = current.x[point][axis];
    let f = Restricted::new(prob, current, point, axis);
    if f.terms.is_empty() {
        return now;
    }
    let f_now = f.eval(now);
    let mut best = (now, f_now);
    for t in f.stationary_points(now) {
        if !t.is_finite() {
            continue;
        }
        let v = f.eval(t);
        let tie = (v - best.1).abs() <= 1e-15 * best.1.abs().max(f64::MIN_POSITIVE);
        if v < best.1 && !tie || tie && (t - now).abs() < (best.0 - now).abs() {
            best = (t, v);
        }
    }
    if best.1 <= f_now {
        best.0
    } else {
        now
    }
}

/// Points need at least this many weighted pairs to be pinned down.
pub fn required_degree(n_points: usize, dim: usize) -> usize {
    (dim + 1).min(n_points.saturating_sub(1))
}

fn check_constrained(prob: &SStressProblem) -> Result<()> {
    let need = required_degree(prob.n_points(), prob.dim);
    for (point, degree) in prob.degrees().into_iter().enumerate() {
        if degree < need {
            return Err(Error::UnderConstrained { point, degree, required: need });
        }
    }
    Ok(())
}

/// Measured distances completed by shortest paths over the measurement
/// graph, or `None` when the graph is disconnected.
pub fn shortest_path_completion(prob: &SStressProblem) -> Option<Edm> {
    let n = prob.n_points();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for i in 0..n {
        d[i][i] = 0.0;
        for j in 0..n {
            if i != j && prob.weights[i][j] > 0.0 {
                d[i][j] = prob.target.dsq[i][j].max(0.0).sqrt();
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    if d.iter().flatten().any(|v| v.is_infinite()) {
        return None;
    }
    Edm::from_full(d.iter().map(|r| r.iter().map(|v| v * v).collect()).collect()).ok()
}

fn random_start(prob: &SStressProblem, seed: u64) -> PointConfig {
    let side = prob
        .target
        .dsq
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(*v))
        .sqrt()
        .max(1.0);
    let mut rng = seed::rng(seed);
    let x = (0..prob.n_points())
        .map(|_| (0..prob.dim).map(|_| rng.random_range(0.0..side)).collect())
        .collect();
    PointConfig { x, dim: prob.dim }
}

pub fn initial_configuration(prob: &SStressProblem, init: Init) -> PointConfig {
    match init {
        Init::Random { seed } => random_start(prob, seed),
        Init::Classical => match shortest_path_completion(prob) {
            Some(full) => classical_mds_clamped(&full, prob.dim),
            None => random_start(prob, FALLBACK_SEED),
        },
    }
}

/// Alternating coordinate descent from the configured start, followed by
/// `settings.restarts` random starts unless the first run fits exactly.
pub fn sstress_solve(prob: &SStressProblem, settings: &SolverSettings) -> Result<SStressSolution> {
    let start = initial_configuration(prob, settings.init);
    let mut best = sstress_solve_from(prob, settings, start)?;
    let floor = zero_cost_floor(prob);
    let base = match settings.init {
        Init::Random { seed } => seed,
        Init::Classical => FALLBACK_SEED,
    };
    for k in 0..settings.restarts {
        if best.final_cost() <= floor {
            break;
        }
        let start = random_start(prob, seed::derive(base, RESTART_STREAM, k as u64));
        let run = sstress_solve_from(prob, settings, start)?;
        if run.final_cost() < best.final_cost() {
            best = run;
        }
    }
    Ok(best)
}

/// Costs at or below this are zero up to rounding.
fn zero_cost_floor(prob: &SStressProblem) -> f64 {
    let n = prob.n_points();
    let energy: f64 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| prob.weights[i][j] * prob.target.dsq[i][j].powi(2))
        .sum();
    1e-28 * energy
}

/// Alternating coordinate descent from an explicit start, no restarts.
pub fn sstress_solve_from(
    prob: &SStressProblem,
    settings: &SolverSettings,
    start: PointConfig,
) -> Result<SStressSolution> {
    if settings.max_iters == 0 || !(settings.rel_tol > 0.0) {
        return Err(invalid("max_iters must be at least 1 and rel_tol positive"));
    }
    check_dims(&start, prob)?;
    check_constrained(prob)?;

    let floor = zero_cost_floor(prob);
    let mut x = start;
    let mut trace = vec![cost_unchecked(&x, prob)];
    let mut step = EXTRAPOLATION_START;
    for _ in 0..settings.max_iters {
        let prev = *trace.last().unwrap();
        let before = x.clone();
        for p in 0..x.len() {
            for a in 0..x.dim {
                x.x[p][a] = coordinate_update(prob, &x, p, a);
            }
        }
        let mut cost = cost_unchecked(&x, prob);
        if cost > prev {
            // only rounding can get here; keep the better configuration
            x = before;
            break;
        }
        if settings.extrapolation {
            // continue along the sweep's displacement; kept only if it helps
            let mut y = x.clone();
            for (row, (cur, old)) in y.x.iter_mut().zip(x.x.iter().zip(&before.x)) {
                for (v, (c, o)) in row.iter_mut().zip(cur.iter().zip(old)) {
                    *v = c + step * (c - o);
                }
            }
            let trial = cost_unchecked(&y, prob);
            if trial < cost {
                x = y;
                cost = trial;
                step = (step * EXTRAPOLATION_GROWTH).min(EXTRAPOLATION_MAX);
            } else {
                step = (step / EXTRAPOLATION_GROWTH).max(EXTRAPOLATION_START);
            }
        }
        trace.push(cost);
        if cost <= floor || prev - cost < settings.rel_tol * prev {
            break;
        }
    }
    Ok(SStressSolution { x, cost_trace: trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edm::edm_from_points;
    use crate::eval::align_and_score;

    fn pc(points: &[[f64; 2]]) -> PointConfig {
        PointConfig::new(points.iter().map(|p| p.to_vec()).collect(), 2).unwrap()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let truth = pc(&[[0.0, 0.0], [1.0, 0.2], [0.3, 2.0], [2.0, 2.0]]);
        let prob = SStressProblem::unit_weights(edm_from_points(&truth), 2).unwrap();
        let x = pc(&[[0.1, 0.0], [1.5, 0.2], [0.3, 2.5], [2.0, 1.0]]);
        let g = sstress_gradient(&x, &prob).unwrap();
        let h = 1e-6;
        for p in 0..4 {
            for a in 0..2 {
                let mut plus = x.clone();
                plus.x[p][a] += h;
                let mut minus = x.clone();
                minus.x[p][a] -= h;
                let fd = (sstress_cost(&plus, &prob).unwrap() - sstress_cost(&minus, &prob).unwrap()) / (2.0 * h);
                assert!((fd - g[p][a]).abs() < 1e-6 * fd.abs().max(1.0), "{p},{a}: {fd} vs {}", g[p][a]);
            }
        }
    }

    fn random_config(rng: &mut seed::Rng, n: usize, dim: usize, side: f64) -> PointConfig {
        PointConfig::new(
            (0..n).map(|_| (0..dim).map(|_| rng.random_range(0.0..side)).collect()).collect(),
            dim,
        )
        .unwrap()
    }

    fn round_trip_error(a: &Edm, b: &Edm) -> f64 {
        a.dsq
            .iter()
            .flatten()
            .zip(b.dsq.iter().flatten())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn cmds_recovers_unit_square() {
        let e = edm_from_points(&pc(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]));
        let x = classical_mds(&e, 2).unwrap();
        assert!(round_trip_error(&edm_from_points(&x), &e) < 1e-9);
    }

    #[test]
    fn cmds_collinear_second_axis_vanishes() {
        let e = edm_from_points(&pc(&[[0.0, 0.0], [1.0, 1.0], [2.5, 2.5], [4.0, 4.0]]));
        let x = classical_mds(&e, 2).unwrap();
        assert!(x.x.iter().all(|p| p[1].abs() < 1e-6), "{:?}", x.x);
        assert!(round_trip_error(&edm_from_points(&x), &e) < 1e-9);
    }

    #[test]
    fn cmds_random_six_points_and_centering() {
        let mut rng = seed::rng(6);
        let truth = random_config(&mut rng, 6, 2, 5.0);
        let e = edm_from_points(&truth);
        let x = classical_mds(&e, 2).unwrap();
        assert!(round_trip_error(&edm_from_points(&x), &e) < 1e-9);
        assert!(x.centroid().iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn cmds_rejects_bad_inputs() {
        let mut e = edm_from_points(&pc(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]));
        assert!(classical_mds(&e, 3).is_err());
        e.unmask(0, 1);
        assert!(matches!(classical_mds(&e, 2), Err(Error::InvalidArgument(_))));
        // negated tetrahedron: -LDL/2 has one zero and three negative eigenvalues
        let tetra = PointConfig::new(
            vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            3,
        )
        .unwrap();
        let mut bad = edm_from_points(&tetra);
        bad.dsq.iter_mut().flatten().for_each(|v| *v = -*v);
        assert!(matches!(classical_mds(&bad, 2), Err(Error::NotEdm(_))));
    }

    #[test]
    fn cost_zero_at_truth_and_with_zero_weights() {
        let truth = pc(&[[0.0, 0.0], [2.0, 0.0], [0.5, 1.5], [3.0, 3.0]]);
        let prob = SStressProblem::unit_weights(edm_from_points(&truth), 2).unwrap();
        assert_eq!(sstress_cost(&truth, &prob).unwrap(), 0.0);
        let zero = SStressProblem::new(prob.target.clone(), vec![vec![0.0; 4]; 4], 2).unwrap();
        let other = pc(&[[1.0, 0.0], [9.0, 0.0], [0.5, 7.5], [3.0, -3.0]]);
        assert_eq!(sstress_cost(&other, &zero).unwrap(), 0.0);
    }

    #[test]
    fn cost_matches_hand_expansion_for_three_points() {
        // x0 = (0,0), x1 = (1,0), x2 = (0,2); targets d01 = 2, d02 = 1, d12 = 3
        // model squared distances: 1, 4, 5; target squared: 4, 1, 9
        // residuals: -3, 3, -4; weights w01 = 1, w02 = 2, w12 = 0.5
        // ordered-pair sum = 2 * (1*9 + 2*9 + 0.5*16) = 70
        let x = pc(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]]);
        let target = Edm::from_full(vec![vec![0.0, 4.0, 1.0], vec![4.0, 0.0, 9.0], vec![1.0, 9.0, 0.0]]).unwrap();
        let w = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 0.5], vec![2.0, 0.5, 0.0]];
        let prob = SStressProblem::new(target, w, 2).unwrap();
        assert_eq!(sstress_cost(&x, &prob).unwrap(), 70.0);
        assert!(sstress_cost(&pc(&[[0.0, 0.0], [1.0, 0.0]]), &prob).is_err());
    }

    #[test]
    fn problem_validation() {
        let e = edm_from_points(&pc(&[[0.0, 0.0], [1.0, 0.0]]));
        assert!(SStressProblem::new(e.clone(), vec![vec![0.0, 1.0], vec![2.0, 0.0]], 2).is_err());
        assert!(SStressProblem::new(e.clone(), vec![vec![1.0, 1.0], vec![1.0, 0.0]], 2).is_err());
        assert!(SStressProblem::new(e.clone(), vec![vec![0.0, -1.0], vec![-1.0, 0.0]], 2).is_err());
        let mut holey = e.clone();
        holey.unmask(0, 1);
        assert!(SStressProblem::new(holey, vec![vec![0.0, 1.0], vec![1.0, 0.0]], 2).is_err());
    }

    #[test]
    fn cubic_roots() {
        let mut r = real_cubic_roots(1.0, -6.0, 11.0, -6.0);
        r.sort_by(f64::total_cmp);
        for (got, want) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-9);
        }
        let one = real_cubic_roots(2.0, 0.0, 2.0, -4.0);
        assert_eq!(one.len(), 1);
        assert!((one[0] - 1.0).abs() < 1e-12);
        assert_eq!(real_cubic_roots(1.0, 0.0, 0.0, 0.0), vec![0.0]);
    }

    #[test]
    fn coordinate_update_two_points() {
        // minimize (x^2 - 1)^2 from x = 3: the +1 branch
        let target = Edm::from_full(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let prob = SStressProblem::unit_weights(target, 2).unwrap();
        let x = pc(&[[3.0, 0.0], [0.0, 0.0]]);
        assert!((coordinate_update(&prob, &x, 0, 0) - 1.0).abs() < 1e-12);
        let left = pc(&[[-3.0, 0.0], [0.0, 0.0]]);
        assert!((coordinate_update(&prob, &left, 0, 0) + 1.0).abs() < 1e-12);
        // starting exactly between the minima the tie goes to the nearer one... both
        // are 1 away, and the local maximum at 0 never wins
        let mid = pc(&[[0.0, 0.0], [0.0, 0.0]]);
        assert!((coordinate_update(&prob, &mid, 0, 0).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coordinate_update_zero_weight_row_is_a_no_op() {
        let target = edm_from_points(&pc(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]));
        let w = vec![vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]];
        let prob = SStressProblem::new(target, w, 2).unwrap();
        let x = pc(&[[0.37, -2.0], [1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(coordinate_update(&prob, &x, 0, 0), 0.37);
        assert_eq!(coordinate_update(&prob, &x, 0, 1), -2.0);
    }

    #[test]
    fn solver_fixed_point_at_truth() {
        let truth = pc(&[[0.0, 0.0], [2.0, 0.0], [0.5, 1.5], [3.0, 3.0], [1.0, 2.5]]);
        let prob = SStressProblem::unit_weights(edm_from_points(&truth), 2).unwrap();
        let sol = sstress_solve_from(&prob, &SolverSettings::default(), truth.clone()).unwrap();
        assert!(sol.cost_trace[0] < 1e-20);
        assert_eq!(sol.sweeps(), 1);
    }

    #[test]
    fn solver_recovers_complete_noiseless_six_points() {
        let mut rng = seed::rng(42);
        let truth = random_config(&mut rng, 6, 2, 4.0);
        let prob = SStressProblem::unit_weights(edm_from_points(&truth), 2).unwrap();
        let settings = SolverSettings { max_iters: 20_000, rel_tol: 1e-15, init: Init::Random { seed: 3 }, restarts: 0, ..SolverSettings::default() };
        let sol = sstress_solve(&prob, &settings).unwrap();
        assert!(sol.final_cost() < 1e-10, "cost {}", sol.final_cost());
        let score = align_and_score(&sol.x, &truth).unwrap();
        assert!(score.mean_error < 1e-5, "error {}", score.mean_error);
    }

    #[test]
    fn solver_recovers_with_two_missing_pairs() {
        let truth = pc(&[[0.0, 0.0], [3.0, 0.5], [1.0, 2.5], [3.5, 3.0], [-1.0, 2.0]]);
        let mut target = edm_from_points(&truth);
        target.unmask(0, 1);
        target.unmask(2, 3);
        let prob = SStressProblem::unit_weights(target, 2).unwrap();
        let settings = SolverSettings { max_iters: 20_000, rel_tol: 1e-15, init: Init::Classical, ..Default::default() };
        let sol = sstress_solve(&prob, &settings).unwrap();
        let score = align_and_score(&sol.x, &truth).unwrap();
        assert!(score.mean_error < 1e-4, "error {}", score.mean_error);
    }

    #[test]
    fn restarts_escape_a_local_minimum() {
        // the shortest-path start of this instance settles at cost 0.1486
        let truth = pc(&[[0.0, 0.0], [3.0, 0.5], [1.0, 2.5], [3.5, 3.0], [-1.0, 2.0]]);
        let mut target = edm_from_points(&truth);
        target.unmask(0, 1);
        target.unmask(2, 3);
        let prob = SStressProblem::unit_weights(target, 2).unwrap();
        let single = SolverSettings { max_iters: 20_000, rel_tol: 1e-15, init: Init::Classical, restarts: 0, ..SolverSettings::default() };
        let stuck = sstress_solve(&prob, &single).unwrap();
        assert!(stuck.final_cost() > 0.1);
        let multi = SolverSettings { restarts: DEFAULT_RESTARTS, ..single };
        assert!(sstress_solve(&prob, &multi).unwrap().final_cost() < 1e-12);
    }

    #[test]
    fn under_constrained_problem_rejected() {
        let truth = pc(&[[0.0, 0.0], [3.0, 0.5], [1.0, 2.5], [3.5, 3.0], [-1.0, 2.0]]);
        let mut target = edm_from_points(&truth);
        target.unmask(0, 1);
        target.unmask(0, 2);
        let prob = SStressProblem::unit_weights(target, 2).unwrap();
        let err = sstress_solve(&prob, &SolverSettings::default()).unwrap_err();
        assert_eq!(err, Error::UnderConstrained { point: 0, degree: 2, required: 3 });
    }

    #[test]
    fn disconnected_graph_falls_back_to_random_start() {
        // two 4-cliques with no link between them
        let truth = PointConfig::new((0..8).map(|i| vec![i as f64, (i * i % 5) as f64]).collect(), 2).unwrap();
        let mut target = edm_from_points(&truth);
        for i in 0..4 {
            for j in 4..8 {
                target.unmask(i, j);
            }
        }
        let prob = SStressProblem::unit_weights(target, 2).unwrap();
        assert!(shortest_path_completion(&prob).is_none());
        let start = initial_configuration(&prob, Init::Classical);
        assert_eq!(start, random_start(&prob, FALLBACK_SEED));
    }
}
