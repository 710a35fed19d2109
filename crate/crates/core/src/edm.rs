//! Euclidean distance matrices, possibly with unmeasured entries.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ranging::DistanceMeasurement;

pub const DEFAULT_PSD_TOL: f64 = 1e-9;

/// `N` points in `dim`-dimensional space, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointConfig {
    pub x: Vec<Vec<f64>>,
    pub dim: usize,
}

impl PointConfig {
    pub fn new(x: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        if x.is_empty() {
            return Err(invalid("a configuration needs at least one point"));
        }
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        for (i, p) in x.iter().enumerate() {
            if p.len() != dim {
                return Err(invalid(format!("point {i} has {} coordinates, expected {dim}", p.len())));
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(invalid(format!("point {i} has a non-finite coordinate")));
            }
        }
        Ok(Self { x, dim })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dist_sq(&self, i: usize, j: usize) -> f64 {
        self.x[i].iter().zip(&self.x[j]).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist_sq(i, j).sqrt()
    }

    /// Rows are points.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.dim, |i, k| self.x[i][k])
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            x: (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect(),
            dim: m.ncols(),
        }
    }

    pub fn centroid(&self) -> Vec<f64> {
        let n = self.len() as f64;
        (0..self.dim)
            .map(|k| self.x.iter().map(|p| p[k]).sum::<f64>() / n)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edm {
    /// Squared distances, m^2; zero wherever `mask` is false.
    pub dsq: Vec<Vec<f64>>,
    pub mask: Vec<Vec<bool>>,
    pub n_points: usize,
}

impl Edm {
    /// Squares a distance measurement, keeping its mask.
    pub fn from_distances(m: &DistanceMeasurement) -> Self {
        let n = m.n_phones;
        let mut mask = m.mask.clone();
        let dsq = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if m.mask[i][j] && i != j { m.d[i][j] * m.d[i][j] } else { 0.0 })
                    .collect()
            })
            .collect();
        for (i, row) in mask.iter_mut().enumerate() {
            row[i] = true;
        }
        Self { dsq, mask, n_points: n }
    }

    pub fn from_full(dsq: Vec<Vec<f64>>) -> Result<Self> {
        let n = dsq.len();
        if dsq.iter().any(|r| r.len() != n) {
            return Err(invalid("distance matrix is not square"));
        }
        Ok(Self {
            dsq,
            mask: vec![vec![true; n]; n],
            n_points: n,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|r| r.iter().all(|&m| m))
    }

    /// Removes the pair `(i, j)` from the measured set.
    pub fn unmask(&mut self, i: usize, j: usize) {
        for (a, b) in [(i, j), (j, i)] {
            self.mask[a][b] = false;
            self.dsq[a][b] = 0.0;
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_points, self.n_points, |i, j| self.dsq[i][j])
    }

    fn scale(&self) -> f64 {
        self.dsq
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub fn edm_from_points(p: &PointConfig) -> Edm {
    let n = p.len();
    Edm {
        dsq: (0..n).map(|i| (0..n).map(|j| p.dist_sq(i, j)).collect()).collect(),
        mask: vec![vec![true; n]; n],
        n_points: n,
    }
}

/// Geometric centering matrix `I - (1/N) 1 1^T`.
pub fn centering_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

/// `-(1/2) L D L`, the Gram matrix of the centered configuration when `D`
/// is an EDM.
pub fn centered_gram(d: &DMatrix<f64>) -> DMatrix<f64> {
    let l = centering_matrix(d.nrows());
    let mut g = &l * d * &l * -0.5;
    // symmetrize away rounding so the eigensolver sees an exactly symmetric matrix
    let gt = g.transpose();
    g += gt;
    g *= 0.5;
    g
}

/// Eigenvalues of `-(1/2) L D L`, descending.
pub fn gram_eigenvalues(m: &Edm) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(centered_gram(&m.to_matrix()))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Schoenberg's criterion: symmetric, hollow, and `-L D L` positive
/// semidefinite. Eigenvalues down to `-tol * max|lambda|` count as zero.
pub fn is_edm(m: &Edm, tol: f64) -> Result<bool> {
    if !m.is_complete() {
        return Err(invalid("the spectral EDM test needs every entry measured"));
    }
    let n = m.n_points;
    let slack = tol * m.scale().max(f64::MIN_POSITIVE);
    for i in 0..n {
        if m.dsq[i][i].abs() > slack {
            return Ok(false);
        }
        for j in i + 1..n {
            if (m.dsq[i][j] - m.dsq[j][i]).abs() > slack {
                return Ok(false);
            }
        }
    }
    let ev = gram_eigenvalues(m);
    let biggest = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(ev.iter().all(|&v| v >= -tol * biggest))
}

/// Number of eigenvalues of `-(1/2) L D L` above `tol * max|lambda|`.
pub fn embedding_rank(m: &Edm, tol: f64) -> usize {
    let ev = gram_eigenvalues(m);
    let biggest = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    ev.iter().filter(|&&v| v > tol * biggest).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricProperty {
    NonNegativity,
    SelfDistance,
    Symmetry,
    TriangleInequality,
}

/// Metric axioms violated by the measured entries. Triples with an
/// unmeasured side are skipped.
pub fn metric_checks(m: &Edm) -> Vec<MetricProperty> {
    let n = m.n_points;
    let slack = 1e-12 * m.scale().sqrt().max(1.0);
    let on = |i: usize, j: usize| m.mask[i][j];
    let mut found = [false; 4];

    for i in 0..n {
        if on(i, i) && m.dsq[i][i] != 0.0 {
            found[1] = true;
        }
        for j in 0..n {
            if on(i, j) && m.dsq[i][j] < 0.0 {
                found[0] = true;
            }
            if on(i, j) && on(j, i) && m.dsq[i][j] != m.dsq[j][i] {
                found[2] = true;
            }
        }
    }

    let d = |i: usize, j: usize| m.dsq[i][j].max(0.0).sqrt();
    'outer: for i in 0..n {
        for j in 0..n {
            if i == j || !on(i, j) {
                continue;
            }
            for k in 0..n {
                if k == i || k == j || !on(i, k) || !on(k, j) {
                    continue;
                }
                if d(i, j) > d(i, k) + d(k, j) + slack {
                    found[3] = true;
                    break 'outer;
                }
            }
        }
    }

    [
        MetricProperty::NonNegativity,
        MetricProperty::SelfDistance,
        MetricProperty::Symmetry,
        MetricProperty::TriangleInequality,
    ]
    .into_iter()
    .zip(found)
    .filter_map(|(p, f)| f.then_some(p))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> PointConfig {
        PointConfig::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]], 2).unwrap()
    }

    fn bad_triangle() -> Edm {
        Edm::from_full(vec![vec![0.0, 1.0, 16.0], vec![1.0, 0.0, 1.0], vec![16.0, 1.0, 0.0]]).unwrap()
    }

    #[test]
    fn unit_square_edm() {
        let e = edm_from_points(&square());
        assert_eq!(
            e.dsq,
            vec![
                vec![0.0, 1.0, 2.0, 1.0],
                vec![1.0, 0.0, 1.0, 2.0],
                vec![2.0, 1.0, 0.0, 1.0],
                vec![1.0, 2.0, 1.0, 0.0]
            ]
        );
        assert!(e.is_complete());
    }

    #[test]
    fn tiny_configs() {
        let one = edm_from_points(&PointConfig::new(vec![vec![3.0, 4.0]], 2).unwrap());
        assert_eq!(one.dsq, vec![vec![0.0]]);
        let twins = edm_from_points(&PointConfig::new(vec![vec![1.0, 2.0], vec![1.0, 2.0]], 2).unwrap());
        assert_eq!(twins.dsq, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn point_config_validation() {
        assert!(PointConfig::new(vec![], 2).is_err());
        assert!(PointConfig::new(vec![vec![0.0]], 2).is_err());
        assert!(PointConfig::new(vec![vec![0.0, f64::NAN]], 2).is_err());
    }

    #[test]
    fn schoenberg_accepts_real_edm() {
        assert!(is_edm(&edm_from_points(&square()), DEFAULT_PSD_TOL).unwrap());
        assert_eq!(embedding_rank(&edm_from_points(&square()), 1e-9), 2);
    }

    #[test]
    fn schoenberg_rejects_triangle_violation() {
        // brute check of the triangle first: 4 > 1 + 1
        let m = bad_triangle();
        assert!(m.dsq[0][2].sqrt() > m.dsq[0][1].sqrt() + m.dsq[1][2].sqrt());
        assert!(gram_eigenvalues(&m).iter().any(|&v| v < -1e-6));
        assert!(!is_edm(&m, DEFAULT_PSD_TOL).unwrap());
    }

    #[test]
    fn schoenberg_rejects_nonzero_diagonal() {
        let mut m = edm_from_points(&square());
        m.dsq[1][1] = 0.5;
        assert!(!is_edm(&m, DEFAULT_PSD_TOL).unwrap());
    }

    #[test]
    fn schoenberg_needs_complete_matrix() {
        let mut m = edm_from_points(&square());
        m.unmask(0, 2);
        assert!(matches!(is_edm(&m, DEFAULT_PSD_TOL), Err(crate::Error::InvalidArgument(_))));
    }

    #[test]
    fn metric_check_examples() {
        assert!(metric_checks(&edm_from_points(&square())).is_empty());

        let mut asym = edm_from_points(&square());
        asym.dsq[0][1] = 1.5;
        assert_eq!(metric_checks(&asym), vec![MetricProperty::Symmetry]);

        assert_eq!(metric_checks(&bad_triangle()), vec![MetricProperty::TriangleInequality]);

        let mut neg = edm_from_points(&square());
        neg.dsq[0][1] = -1.0;
        neg.dsq[1][0] = -1.0;
        assert!(metric_checks(&neg).contains(&MetricProperty::NonNegativity));

        let mut diag = edm_from_points(&square());
        diag.dsq[2][2] = 0.1;
        assert_eq!(metric_checks(&diag), vec![MetricProperty::SelfDistance]);
    }

    #[test]
    fn metric_checks_skip_unmeasured_triples() {
        let mut m = bad_triangle();
        m.unmask(0, 1);
        assert!(metric_checks(&m).is_empty());
    }

    #[test]
    fn from_distances_squares_and_keeps_mask() {
        let mut dm = DistanceMeasurement::empty(3);
        dm.set(0, 1, 2.0);
        dm.set(1, 2, 0.5);
        let e = Edm::from_distances(&dm);
        assert_eq!(e.dsq[0][1], 4.0);
        assert_eq!(e.dsq[2][1], 0.25);
        assert!(!e.mask[0][2]);
        assert!(e.mask[2][2]);
    }
}
