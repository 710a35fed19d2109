//! Error of an estimated configuration against ground truth, after removing
//! the rotation, reflection and translation that relative localization
//! cannot observe.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::edm::PointConfig;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// Row-major `dim x dim` orthogonal matrix; may include a reflection.
    pub rotation: Vec<Vec<f64>>,
    pub translation: Vec<f64>,
    pub per_point_error: Vec<f64>,
    /// Mean Euclidean (not squared) distance to the truth.
    pub mean_error: f64,
}

impl AlignmentResult {
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        self.rotation
            .iter()
            .zip(&self.translation)
            .map(|(row, t)| row.iter().zip(p).map(|(r, x)| r * x).sum::<f64>() + t)
            .collect()
    }
}

/// Rigid alignment (rotation, reflection, translation) of `estimate` onto
/// `truth`, scored by the mean unsquared distance.
///
/// Starts from the orthogonal Procrustes solution minimizing
/// `sum |R x_hat_i + t - x_i|^2`, then refines it by iteratively reweighted
/// Procrustes with weights `1 / |residual_i|`, which lowers the mean distance
/// itself at every step.
pub fn align_and_score(estimate: &PointConfig, truth: &PointConfig) -> Result<AlignmentResult> {
    if estimate.len() != truth.len() || estimate.dim != truth.dim {
        return Err(invalid(format!(
            "estimate is {}x{}, truth is {}x{}",
            estimate.len(),
            estimate.dim,
            truth.len(),
            truth.dim
        )));
    }
    let n = truth.len();
    let (r, t) = weighted_procrustes(estimate, truth, &vec![1.0; n]);
    let mut best = score(estimate, truth, &r, &t);
    let scale = truth
        .x
        .iter()
        .flatten()
        .chain(estimate.x.iter().flatten())
        .fold(1.0f64, |m, v| m.max(v.abs()));
    for _ in 0..MAX_REFINE_STEPS {
        let weights: Vec<f64> = best
            .per_point_error
            .iter()
            .map(|e| 1.0 / e.max(1e-12 * scale))
            .collect();
        let (r, t) = weighted_procrustes(estimate, truth, &weights);
        let next = score(estimate, truth, &r, &t);
        if !(next.mean_error < best.mean_error * (1.0 - 1e-13)) {
            if next.mean_error < best.mean_error {
                best = next;
            }
            break;
        }
        best = next;
    }
    Ok(best)
}

const MAX_REFINE_STEPS: usize = 1000;

/// `R`, `t` minimizing `sum w_i |R x_hat_i + t - x_i|^2`; `R = V U^T` from
/// the SVD `H = U S V^T` of the weighted cross-covariance.
fn weighted_procrustes(estimate: &PointConfig, truth: &PointConfig, w: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let total: f64 = w.iter().sum();
    let centroid = |p: &PointConfig| {
        DVector::from_fn(p.dim, |k, _| {
            p.x.iter().zip(w).map(|(row, wi)| wi * row[k]).sum::<f64>() / total
        })
    };
    let est_c = centroid(estimate);
    let tru_c = centroid(truth);
    let a = DMatrix::from_fn(estimate.len(), estimate.dim, |i, k| w[i] * (estimate.x[i][k] - est_c[k]));
    let b = centered(truth, &tru_c);
    let r = orthogonal_factor(&(a.transpose() * b)).transpose();
    let t = &tru_c - &r * &est_c;
    (r, t)
}

/// Orthogonal polar factor `U V^T` of `h = U S V^T`.
///
/// Newton's iteration `X <- (X + X^-T) / 2` from `h` is accurate to rounding
/// where the SVD route loses digits for close singular values; the SVD is
/// kept for (near-)singular `h`.
fn orthogonal_factor(h: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = h.clone().svd(true, true);
    let (u, v_t) = (svd.u.as_ref().expect("u requested"), svd.v_t.as_ref().expect("v_t requested"));
    let fallback = u * v_t;
    let (lo, hi) = svd
        .singular_values
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if !(lo > 1e-6 * hi) {
        return fallback;
    }
    let mut x = h / hi;
    for _ in 0..100 {
        let Some(inv) = x.clone().try_inverse() else {
            return fallback;
        };
        let next = (&x + inv.transpose()) * 0.5;
        let step = (&next - &x).norm();
        x = next;
        if step < 1e-15 {
            break;
        }
    }
    x
}

fn score(estimate: &PointConfig, truth: &PointConfig, r: &DMatrix<f64>, t: &DVector<f64>) -> AlignmentResult {
    let dim = truth.dim;
    let per_point_error: Vec<f64> = (0..truth.len())
        .map(|i| {
            let x = DVector::from_vec(estimate.x[i].clone());
            let y = DVector::from_vec(truth.x[i].clone());
            (r * x + t - y).norm()
        })
        .collect();
    let mean_error = per_point_error.iter().sum::<f64>() / truth.len() as f64;
    AlignmentResult {
        rotation: (0..dim).map(|i| (0..dim).map(|j| r[(i, j)]).collect()).collect(),
        translation: t.iter().copied().collect(),
        per_point_error,
        mean_error,
    }
}

/// Mean distance without any alignment.
pub fn raw_mean_error(estimate: &PointConfig, truth: &PointConfig) -> f64 {
    estimate
        .x
        .iter()
        .zip(&truth.x)
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
        .sum::<f64>()
        / truth.len() as f64
}

fn centered(p: &PointConfig, c: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(p.len(), p.dim, |i, k| p.x[i][k] - c[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng as _;
    use rand_distr::{Distribution, Normal};

    fn random_config(rng: &mut seed::Rng, n: usize, dim: usize) -> PointConfig {
        PointConfig::new((0..n).map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()).collect(), dim).unwrap()
    }

    fn rotate2(p: &PointConfig, angle: f64, mirror: bool, t: [f64; 2]) -> PointConfig {
        let (s, c) = angle.sin_cos();
        let x = p
            .x
            .iter()
            .map(|q| {
                let y = if mirror { -q[1] } else { q[1] };
                vec![c * q[0] - s * y + t[0], s * q[0] + c * y + t[1]]
            })
            .collect();
        PointConfig { x, dim: 2 }
    }

    fn is_orthogonal(r: &[Vec<f64>]) -> bool {
        let n = r.len();
        (0..n).all(|i| {
            (0..n).all(|j| {
                let dot: f64 = (0..n).map(|k| r[k][i] * r[k][j]).sum();
                (dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-9
            })
        })
    }

    #[test]
    fn identity_alignment_is_exact() {
        let mut rng = seed::rng(1);
        let p = random_config(&mut rng, 7, 3);
        let r = align_and_score(&p, &p).unwrap();
        assert!(r.mean_error < 1e-12);
        assert!(is_orthogonal(&r.rotation));
    }

    #[test]
    fn isometries_are_removed() {
        let mut rng = seed::rng(2);
        let truth = random_config(&mut rng, 6, 2);
        for mirror in [false, true] {
            let est = rotate2(&truth, 1.1, mirror, [4.0, -2.5]);
            let r = align_and_score(&est, &truth).unwrap();
            assert!(r.mean_error < 1e-9, "mirror {mirror}: {}", r.mean_error);
            assert!(is_orthogonal(&r.rotation));
            let mapped = r.apply(&est.x[3]);
            assert!((mapped[0] - truth.x[3][0]).abs() < 1e-9);
            assert!((r.per_point_error.iter().sum::<f64>() / 6.0 - r.mean_error).abs() < 1e-15);
        }
    }

    #[test]
    fn noisy_estimate_error_bounded_and_not_worse_than_raw() {
        let mut rng = seed::rng(3);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut total = 0.0;
        for _ in 0..50 {
            let truth = random_config(&mut rng, 6, 2);
            let est = PointConfig {
                x: truth.x.iter().map(|p| p.iter().map(|c| c + noise.sample(&mut rng)).collect()).collect(),
                dim: 2,
            };
            let r = align_and_score(&est, &truth).unwrap();
            assert!(r.mean_error > 0.0);
            assert!(r.mean_error <= raw_mean_error(&est, &truth) + 1e-12);
            total += r.mean_error;
        }
        let mean = total / 50.0;
        assert!(mean > 0.0 && mean < 0.10, "{mean}");
    }

    #[test]
    fn refined_alignment_beats_least_squares_and_identity() {
        let mut rng = seed::rng(5);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut strictly_better = 0;
        for _ in 0..2000 {
            let n = rng.random_range(3..9);
            let truth = random_config(&mut rng, n, 2);
            let est = PointConfig {
                x: truth.x.iter().map(|p| p.iter().map(|c| c + noise.sample(&mut rng)).collect()).collect(),
                dim: 2,
            };
            let r = align_and_score(&est, &truth).unwrap();
            let (lr, lt) = weighted_procrustes(&est, &truth, &vec![1.0; n]);
            let lsq = score(&est, &truth, &lr, &lt).mean_error;
            assert!(r.mean_error <= lsq);
            assert!(r.mean_error <= raw_mean_error(&est, &truth) + 1e-12);
            if r.mean_error < lsq * (1.0 - 1e-6) {
                strictly_better += 1;
            }
            // far-away copy of the estimate scores the same
            let moved = rotate2(&est, 2.0, true, [300.0, -40.0]);
            assert!((align_and_score(&moved, &truth).unwrap().mean_error - r.mean_error).abs() < 1e-9);
        }
        assert!(strictly_better > 0);
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let mut rng = seed::rng(4);
        let a = random_config(&mut rng, 4, 2);
        let b = random_config(&mut rng, 5, 2);
        assert!(align_and_score(&a, &b).is_err());
    }
}
