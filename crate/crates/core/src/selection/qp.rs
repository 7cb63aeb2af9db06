//! `min w^T Q w` over the probability simplex by projected gradient descent.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub const DEFAULT_RIDGE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;
const STEP_TOLERANCE: f64 = 1e-15;
/// Stop once the Frank-Wolfe gap, an upper bound on `f(w) - f*`, falls below this.
const GAP_TOLERANCE: f64 = 1e-12;
const POWER_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub w: Vec<f64>,
    /// `w^T (B + ridge I) w` at the returned point.
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: |B[{i}][{j}] - B[{j}][{i}]| = {gap}")]
    NonSymmetricInput { i: usize, j: usize, gap: f64 },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("invalid ridge {0}")]
    InvalidRidge(f64),
    #[error("no convergence after {} iterations (best objective {})", .best.iterations, .best.objective)]
    NoConvergence { best: QpSolution },
}

/// Euclidean projection onto `{w : w >= 0, sum w = 1}` (sort-based, O(n log n)).
pub fn project_onto_simplex(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty());
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

fn quad(q: &DMatrix<f64>, w: &[f64]) -> f64 {
    let w = DVector::from_column_slice(w);
    w.dot(&(q * &w))
}

fn largest_eigenvalue(q: &DMatrix<f64>) -> f64 {
    let n = q.nrows();
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
    x /= x.norm();
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let y = q * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = x.dot(&y);
        x = y / norm;
    }
    lambda.max((q * &x).norm())
}

/// `grad^T w - min_i grad_i` with `grad = 2 Q w`; zero exactly at a KKT point.
fn frank_wolfe_gap(w: &[f64], qw: &[f64]) -> f64 {
    let along: f64 = w.iter().zip(qw).map(|(a, b)| a * b).sum();
    let min = qw.iter().copied().fold(f64::INFINITY, f64::min);
    2.0 * (along - min)
}

pub fn check_symmetric(b: &DMatrix<f64>) -> Result<(), QpError> {
    if b.nrows() != b.ncols() {
        return Err(QpError::NotSquare { rows: b.nrows(), cols: b.ncols() });
    }
    if b.iter().any(|x| !x.is_finite()) {
        return Err(QpError::NonFinite);
    }
    let scale = b.amax().max(1.0);
    for i in 0..b.nrows() {
        for j in i + 1..b.ncols() {
            let gap = (b[(i, j)] - b[(j, i)]).abs();
            if gap > 1e-12 * scale {
                return Err(QpError::NonSymmetricInput { i, j, gap });
            }
        }
    }
    Ok(())
}

/// Minimises `w^T (B + ridge I) w` subject to `sum w = 1`, `w >= 0`.
///
/// Step size `1 / (2 lambda_max)` with `lambda_max` from power iteration,
/// starting from the uniform vector.
pub fn solve_simplex_qp(b: &DMatrix<f64>, ridge: f64) -> Result<QpSolution, QpError> {
    check_symmetric(b)?;
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(QpError::InvalidRidge(ridge));
    }
    let n = b.nrows();
    let q = b + DMatrix::identity(n, n) * ridge;
    let mut w = vec![1.0 / n as f64; n];
    let lambda = largest_eigenvalue(&q);
    if n == 1 || lambda <= 0.0 {
        return Ok(QpSolution { objective: quad(&q, &w), w, iterations: 0 });
    }
    let step = 1.0 / (2.0 * lambda);

    let mut best = QpSolution { objective: quad(&q, &w), w: w.clone(), iterations: 0 };
    for it in 1..=MAX_ITERATIONS {
        let qw = &q * DVector::from_column_slice(&w);
        if frank_wolfe_gap(&w, qw.as_slice()) <= GAP_TOLERANCE * lambda.max(1.0) {
            best.iterations = it - 1;
            return Ok(best);
        }
        let moved: Vec<f64> = w.iter().zip(qw.iter()).map(|(x, g)| x - step * 2.0 * g).collect();
        let next = project_onto_simplex(&moved);
        let change = next.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        w = next;
        let objective = quad(&q, &w);
        if objective <= best.objective {
            best = QpSolution { w: w.clone(), objective, iterations: it };
        }
        if change <= STEP_TOLERANCE {
            best.iterations = it;
            return Ok(best);
        }
    }
    best.iterations = MAX_ITERATIONS;
    Err(QpError::NoConvergence { best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_basics() {
        assert_eq!(project_onto_simplex(&[0.25, 0.75]), vec![0.25, 0.75]);
        assert_eq!(project_onto_simplex(&[5.0, 0.0]), vec![1.0, 0.0]);
        let p = project_onto_simplex(&[0.3, 0.3, 0.3]);
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        let p = project_onto_simplex(&[-2.0, 0.5, 0.6]);
        assert_eq!(p[0], 0.0);
        assert!((p[1] - 0.45).abs() < 1e-15 && (p[2] - 0.55).abs() < 1e-15);
    }

    #[test]
    fn identity_gives_uniform() {
        let s = solve_simplex_qp(&DMatrix::identity(2, 2), 0.0).unwrap();
        assert_eq!(s.w, vec![0.5, 0.5]);
    }

    #[test]
    fn diag_one_four() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let s = solve_simplex_qp(&b, 0.0).unwrap();
        assert!((s.w[0] - 0.8).abs() < 1e-9 && (s.w[1] - 0.2).abs() < 1e-9, "{:?}", s.w);
        assert!((s.objective - 0.8).abs() < 1e-9);
    }

    #[test]
    fn rejects_asymmetric() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(solve_simplex_qp(&b, 0.0), Err(QpError::NonSymmetricInput { .. })));
        let b = DMatrix::from_row_slice(1, 2, &[1.0, 0.5]);
        assert!(matches!(solve_simplex_qp(&b, 0.0), Err(QpError::NotSquare { .. })));
        assert!(matches!(
            solve_simplex_qp(&DMatrix::identity(2, 2), -1.0),
            Err(QpError::InvalidRidge(_))
        ));
    }

    #[test]
    fn zero_matrix_and_single_policy() {
        let s = solve_simplex_qp(&DMatrix::zeros(3, 3), 0.0).unwrap();
        assert_eq!(s.w, vec![1.0 / 3.0; 3]);
        let s = solve_simplex_qp(&DMatrix::from_element(1, 1, 2.0), 1e-8).unwrap();
        assert_eq!(s.w, vec![1.0]);
    }

    #[test]
    fn vertex_solution() {
        // rank-one B = b b^T with b = (1, -1, 2): any w with b.w = 0 is optimal
        let b = DVector::from_column_slice(&[1.0, -1.0, 2.0]);
        let m = &b * b.transpose();
        let s = solve_simplex_qp(&m, 0.0).unwrap();
        assert!(s.objective < 1e-12, "{s:?}");
        assert!((s.w[0] - s.w[1] + 2.0 * s.w[2]).abs() < 1e-6);
        // b = (1, 2): the minimum sits on the vertex e1
        let b = DVector::from_column_slice(&[1.0, 2.0]);
        let s = solve_simplex_qp(&(&b * b.transpose()), 0.0).unwrap();
        assert_eq!(s.w, vec![1.0, 0.0]);
    }
}
