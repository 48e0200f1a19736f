//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value tolerance used for every rank decision.
pub const RANK_TOL: f64 = 1e-10;

/// Numerical rank with singular values below `rel_tol * s_max` treated as zero.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let s = m.clone().svd(false, false).singular_values;
    let smax = s.max();
    if smax == 0.0 || !smax.is_finite() {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tol * smax).count()
}

/// Moore-Penrose pseudo-inverse of a matrix with full column rank.
///
/// Returns `None` when the column rank is deficient under `rel_tol`, so that
/// rank failures surface as errors instead of being silently regularized.
pub fn pinv_full_column_rank(m: &DMatrix<f64>, rel_tol: f64) -> Option<DMatrix<f64>> {
    let (rows, cols) = m.shape();
    if cols == 0 || rows < cols {
        return None;
    }
    let svd = m.clone().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    if !(smax > 0.0) || !smax.is_finite() {
        return None;
    }
    if s.iter().filter(|&&v| v > rel_tol * smax).count() < cols {
        return None;
    }
    let u = svd.u.as_ref()?;
    let v_t = svd.v_t.as_ref()?;
    let mut sigma_inv = DMatrix::zeros(cols, cols);
    for k in 0..cols {
        sigma_inv[(k, k)] = 1.0 / s[k];
    }
    Some(v_t.transpose() * sigma_inv * u.transpose())
}

/// Induced 2-norm (largest singular value).
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    match m.shape() {
        (0, _) | (_, 0) => 0.0,
        (1, _) | (_, 1) => m.norm(),
        (2, 2) => {
            // Closed form: largest singular value of a 2x2 matrix.
            let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            let s1 = a * a + b * b + c * c + d * d;
            let det = a * d - b * c;
            let disc = (s1 * s1 - 4.0 * det * det).max(0.0).sqrt();
            ((s1 + disc) / 2.0).sqrt()
        }
        _ => m.clone().svd(false, false).singular_values.max(),
    }
}

/// Spectral radius of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by power
/// iteration, started from the all-ones vector.
pub fn power_iteration<F>(n: usize, iterations: usize, mut apply: F) -> f64
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let w = apply(&v);
        let norm = w.norm();
        if norm == 0.0 || !norm.is_finite() {
            return lambda;
        }
        lambda = v.dot(&w);
        v = w / norm;
    }
    // Rayleigh quotient at the final iterate.
    lambda.max(v.dot(&apply(&v)))
}

/// Symmetrize in place and clamp negative eigenvalues at zero.
pub fn make_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&clamped) * q.transpose()
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * (1.0 + m.amax())
}

/// Condition number in the 2-norm; infinite for singular matrices.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = m.clone().svd(false, false).singular_values;
    let smin = s.min();
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        s.max() / smin
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pinv_of_column_is_least_squares_inverse() {
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let p = pinv_full_column_rank(&b, RANK_TOL).unwrap();
        assert_relative_eq!(p[(0, 0)], 0.5, epsilon = 1e-14);
        assert_relative_eq!(p[(0, 1)], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn pinv_rejects_rank_deficiency() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(pinv_full_column_rank(&m, RANK_TOL).is_none());
        let wide = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(pinv_full_column_rank(&wide, RANK_TOL).is_none());
    }

    #[test]
    fn closed_form_norm_matches_svd() {
        let m = DMatrix::from_row_slice(2, 2, &[0.3, -1.7, 2.2, 0.9]);
        let svd = m.clone().svd(false, false).singular_values.max();
        assert_relative_eq!(norm2(&m), svd, epsilon = 1e-12);
    }

    #[test]
    fn power_iteration_finds_top_eigenvalue() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 1.0]);
        let top = power_iteration(3, 200, |v| &m * v);
        let exact = m.clone().symmetric_eigen().eigenvalues.max();
        assert_relative_eq!(top, exact, epsilon = 1e-9);
    }

    #[test]
    fn spectral_radius_of_rotation_is_one() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert_relative_eq!(spectral_radius(&m), 1.0, epsilon = 1e-12);
    }
}
