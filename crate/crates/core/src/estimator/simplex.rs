use nalgebra::DVector;

use crate::error::{Error, Result};

/// Weights below this value are set to exactly zero.
pub const ZERO_CLAMP: f64 = 1e-12;

/// Estimator coefficients for one target time `t`: a point of the simplex.
/// `alpha[k]` is the weight of the measurement at `tau = k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub alpha: DVector<f64>,
    pub t: usize,
}

impl WeightVector {
    pub fn one_hot(len: usize, index: usize, t: usize) -> Self {
        let mut alpha = DVector::zeros(len);
        alpha[index] = 1.0;
        Self { alpha, t }
    }

    pub fn uniform(len: usize, t: usize) -> Self {
        Self { alpha: DVector::from_element(len, 1.0 / len as f64), t }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn is_feasible(&self) -> bool {
        (self.alpha.sum() - 1.0).abs() <= 1e-9 && self.alpha.iter().all(|&a| a >= -ZERO_CLAMP)
    }

    /// Number of entries strictly above `threshold`.
    pub fn count_above(&self, threshold: f64) -> usize {
        self.alpha.iter().filter(|&&a| a > threshold).count()
    }
}

/// Euclidean projection onto the probability simplex by the sort-and-threshold
/// algorithm. The sort is stable, so equal entries keep their input order.
pub fn project_simplex(v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("cannot project an empty vector".into()));
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite entry in projection input".into()));
    }
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    let mut alpha = v.map(|x| (x - theta).max(0.0));
    clamp_and_normalize(&mut alpha);
    Ok(alpha)
}

pub(crate) fn clamp_and_normalize(alpha: &mut DVector<f64>) {
    for a in alpha.iter_mut() {
        if *a < ZERO_CLAMP {
            *a = 0.0;
        }
    }
    let s = alpha.sum();
    if s > 0.0 {
        *alpha /= s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn proj(v: &[f64]) -> Vec<f64> {
        project_simplex(&DVector::from_column_slice(v)).unwrap().iter().copied().collect()
    }

    #[test]
    fn feasible_point_is_fixed() {
        assert_eq!(proj(&[0.5, 0.5]), vec![0.5, 0.5]);
    }

    #[test]
    fn large_entry_takes_all_mass() {
        assert_eq!(proj(&[2.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn uniform_shift() {
        for a in proj(&[0.2, 0.2, 0.2]) {
            assert_relative_eq!(a, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn non_finite_is_rejected() {
        assert!(project_simplex(&DVector::from_vec(vec![1.0, f64::NAN])).is_err());
    }

    proptest! {
        #[test]
        fn output_is_on_simplex_and_idempotent(v in proptest::collection::vec(-10.0f64..10.0, 1..20)) {
            let p = project_simplex(&DVector::from_vec(v)).unwrap();
            prop_assert!((p.sum() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&a| a >= 0.0));
            let pp = project_simplex(&p).unwrap();
            prop_assert!((pp - p).amax() < 1e-12);
        }
    }
}
