//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// `A <- (A + A^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

/// Largest absolute asymmetry `max |a_ij - a_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && asymmetry(m) <= tol
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Eigendecomposition of the symmetric part of `m`.
pub fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrized(m.clone()))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    sym_eigen(m).eigenvalues.min()
}

/// `log det` of a positive-definite matrix, `None` when the Cholesky fails.
pub fn logdet_pd(m: &DMatrix<f64>) -> Option<f64> {
    if m.nrows() == 0 {
        return Some(0.0);
    }
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(2.0 * acc)
}

pub fn inverse_pd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    let inv = m.clone().cholesky()?.inverse();
    if inv.iter().all(|v| v.is_finite()) {
        Some(symmetrized(inv))
    } else {
        None
    }
}

/// Cholesky-based positive-definiteness check.
pub fn is_pd(m: &DMatrix<f64>) -> bool {
    m.nrows() == 0 || logdet_pd(m).is_some()
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Sum of `||a_k - b_k||_F^2` over matched lists.
pub fn frobenius_sq_diff(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).iter().map(|v| v * v).sum::<f64>())
        .sum()
}

pub fn frobenius_sq(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>()).sum()
}

/// Reciprocal-of-diagonal initializer, floored so that constant columns stay finite.
pub fn diagonal_inverse(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let d = DVector::from_iterator(m.nrows(), (0..m.nrows()).map(|i| 1.0 / m[(i, i)].max(floor)));
    DMatrix::from_diagonal(&d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logdet_matches_eigenvalues() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let expected: f64 = sym_eigen(&m).eigenvalues.iter().map(|v| v.ln()).sum();
        assert!((logdet_pd(&m).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn logdet_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(logdet_pd(&m).is_none());
        assert!(!is_pd(&m));
    }

    #[test]
    fn empty_matrices_are_pd() {
        let m = DMatrix::<f64>::zeros(0, 0);
        assert_eq!(logdet_pd(&m), Some(0.0));
        assert_eq!(inverse_pd(&m).unwrap().nrows(), 0);
    }

    #[test]
    fn trace_product_matches_dense() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = DMatrix::from_row_slice(3, 2, &[0.5, -1.0, 2.0, 0.0, 1.0, 3.0]);
        assert!((trace_product(&a, &b) - (&a * &b).trace()).abs() < 1e-12);
    }
}
