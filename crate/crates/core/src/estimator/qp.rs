use nalgebra::{DMatrix, DVector};

use super::metric::DistanceMetric;
use crate::dynsys::TransitionCache;
use crate::error::{Error, Result};

/// High-probability variance constant `36 b^2 (1 + sqrt(log(1/beta)))^2`.
pub fn noise_variance_constant(b: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidArgument(format!("beta must lie in (0, 1], got {beta}")));
    }
    if !(b >= 0.0) || !b.is_finite() {
        return Err(Error::InvalidArgument(format!("noise bound must be >= 0, got {b}")));
    }
    let s = 1.0 + (1.0 / beta).ln().sqrt();
    Ok(36.0 * b * b * s * s)
}

/// Variance matrix over `tau = 1..=T` (row/column `k` is `tau = k + 1`):
///
/// `Q[tau, tau'] = sum_{i <= min(tau, tau')} ||H_tau^-1 Phi_(tau,i)|| ||H_tau'^-1 Phi_(tau',i)||`
/// plus `||(C_tau H_tau)^+||^2` on the diagonal for the measurement noise.
pub fn build_q_matrix(cache: &TransitionCache, horizon: usize) -> Result<DMatrix<f64>> {
    check_horizon(cache, horizon)?;
    // Row tau-1 of `n` holds the norms for i = 0..=tau and zeros beyond, so
    // the sum over i <= min(tau, tau') becomes a plain inner product.
    let n = DMatrix::from_fn(horizon, horizon + 1, |k, i| {
        let tau = k + 1;
        if i <= tau {
            cache.h_inv_phi_norm(tau, i)
        } else {
            0.0
        }
    });
    let mut q = &n * n.transpose();
    for k in 0..horizon {
        let g = cache.ch_pinv_norm(k + 1);
        q[(k, k)] += g * g;
    }
    Ok(q)
}

/// Bias vector for target time `t`:
/// `q_t[tau] = sum_{i < tau} d(i, y_i; t, y_t) ||H_tau^-1 Phi_(tau, i+1)||`.
///
/// `outputs` holds `y_0 .. y_{T-1}` (at least); it is only read when the
/// metric has a nonzero output weight.
pub fn build_bias_vector(
    cache: &TransitionCache,
    t: usize,
    metric: &DistanceMetric,
    outputs: &[DVector<f64>],
) -> Result<DVector<f64>> {
    let horizon = cache.horizon();
    if t >= horizon {
        return Err(Error::IndexOutOfRange { t, i: 0, horizon });
    }
    let distances: Vec<f64> = if metric.output_weight != 0.0 {
        if outputs.len() < horizon {
            return Err(Error::Dimension(format!(
                "metric needs outputs y_0..y_{}, got {}",
                horizon - 1,
                outputs.len()
            )));
        }
        (0..horizon).map(|i| metric.distance(i, &outputs[i], t, &outputs[t])).collect()
    } else {
        let empty = DVector::zeros(0);
        (0..horizon).map(|i| metric.distance(i, &empty, t, &empty)).collect()
    };
    Ok(DVector::from_fn(horizon, |k, _| {
        let tau = k + 1;
        (0..tau).map(|i| distances[i] * cache.h_inv_phi_norm(tau, i + 1)).sum()
    }))
}

/// The relaxed objective `alpha' (Q + ratio q q') alpha` for one target time,
/// together with the variance constant used to turn it into an error bound.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub q_matrix: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub ratio: f64,
    pub variance_constant: f64,
}

impl QpProblem {
    pub fn new(q_matrix: DMatrix<f64>, bias: DVector<f64>, ratio: f64, variance_constant: f64) -> Result<Self> {
        let n = q_matrix.nrows();
        if !q_matrix.is_square() || bias.len() != n || n == 0 {
            return Err(Error::Dimension(format!(
                "Q is {:?} and q has length {}",
                q_matrix.shape(),
                bias.len()
            )));
        }
        if !(ratio >= 0.0) {
            return Err(Error::InvalidArgument(format!("ratio must be >= 0, got {ratio}")));
        }
        if !(variance_constant >= 0.0) {
            return Err(Error::InvalidArgument(format!("V must be >= 0, got {variance_constant}")));
        }
        if bias.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("bias vector must be entrywise nonnegative".into()));
        }
        Ok(Self { q_matrix, bias, ratio, variance_constant })
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    /// `(Q + ratio q q') alpha` without forming the rank-one update.
    pub fn apply(&self, alpha: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.q_matrix * alpha;
        if self.ratio != 0.0 {
            out.axpy(self.ratio * self.bias.dot(alpha), &self.bias, 1.0);
        }
        out
    }

    pub fn objective(&self, alpha: &DVector<f64>) -> f64 {
        let qb = self.bias.dot(alpha);
        alpha.dot(&(&self.q_matrix * alpha)) + self.ratio * qb * qb
    }

    pub fn gradient(&self, alpha: &DVector<f64>) -> DVector<f64> {
        self.apply(alpha) * 2.0
    }

    /// Dense `Q + ratio q q'`.
    pub fn hessian_half(&self) -> DMatrix<f64> {
        &self.q_matrix + &self.bias * self.bias.transpose() * self.ratio
    }
}

fn check_horizon(cache: &TransitionCache, horizon: usize) -> Result<()> {
    if horizon == 0 || horizon > cache.horizon() {
        return Err(Error::InvalidArgument(format!(
            "cache covers horizon {}, requested {horizon}",
            cache.horizon()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::LtvSystem;
    use approx::assert_relative_eq;

    fn scalar_cache(a: f64, horizon: usize) -> TransitionCache {
        let s = LtvSystem::lti(
            DMatrix::from_element(1, 1, a),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            horizon,
        )
        .unwrap();
        TransitionCache::build(&s).unwrap()
    }

    #[test]
    fn variance_constant_values() {
        assert_eq!(noise_variance_constant(0.0, 0.3).unwrap(), 0.0);
        assert_relative_eq!(noise_variance_constant(1.0, 1.0).unwrap(), 36.0);
        assert_relative_eq!(noise_variance_constant(1.0, (-1.0f64).exp()).unwrap(), 144.0, epsilon = 1e-12);
        assert!(noise_variance_constant(1.0, 0.0).is_err());
        assert!(noise_variance_constant(1.0, 1.5).is_err());
    }

    #[test]
    fn deadbeat_q_is_twice_identity() {
        let c = scalar_cache(0.0, 6);
        let q = build_q_matrix(&c, 6).unwrap();
        assert!((q - DMatrix::<f64>::identity(6, 6) * 2.0).amax() < 1e-15);
    }

    #[test]
    fn q_is_symmetric() {
        let c = scalar_cache(0.8, 12);
        let q = build_q_matrix(&c, 12).unwrap();
        assert!((&q - q.transpose()).amax() == 0.0);
    }

    #[test]
    fn deadbeat_bias_is_time_distance() {
        let c = scalar_cache(0.0, 8);
        for t in 0..8 {
            let q = build_bias_vector(&c, t, &DistanceMetric::time_only(), &[]).unwrap();
            for k in 0..8 {
                let tau = k + 1;
                assert_relative_eq!(q[k], (t as f64 - (tau as f64 - 1.0)).abs());
            }
        }
    }

    #[test]
    fn zero_metric_gives_zero_bias() {
        let c = scalar_cache(0.5, 5);
        let m = DistanceMetric { time_weight: 0.0, output_weight: 0.0 };
        let q = build_bias_vector(&c, 2, &m, &[]).unwrap();
        assert_eq!(q, DVector::zeros(5));
    }

    #[test]
    fn constant_outputs_match_time_only() {
        let c = scalar_cache(0.6, 7);
        let ys = vec![DVector::from_element(1, 3.0); 8];
        for t in 0..7 {
            let a = build_bias_vector(&c, t, &DistanceMetric::default(), &ys).unwrap();
            let b = build_bias_vector(&c, t, &DistanceMetric::time_only(), &ys).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn bias_needs_outputs_for_output_metric() {
        let c = scalar_cache(0.6, 7);
        assert!(build_bias_vector(&c, 1, &DistanceMetric::default(), &[]).is_err());
        assert!(build_bias_vector(&c, 7, &DistanceMetric::time_only(), &[]).is_err());
    }
}
