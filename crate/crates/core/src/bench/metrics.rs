use nalgebra::DVector;

use crate::error::{Error, Result};

/// `sqrt(mean_t ||u_hat_t - u_t||^2)`.
pub fn rms_error(estimates: &[DVector<f64>], truth: &[DVector<f64>]) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} estimates for {} true inputs",
            estimates.len(),
            truth.len()
        )));
    }
    if estimates.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (e, u) in estimates.iter().zip(truth) {
        if e.len() != u.len() {
            return Err(Error::Dimension("estimate and input dimensions differ".into()));
        }
        sum += (e - u).norm_squared();
    }
    Ok((sum / estimates.len() as f64).sqrt())
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Sample standard deviation (zero for fewer than two values).
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalars(v: &[f64]) -> Vec<DVector<f64>> {
        v.iter().map(|&x| DVector::from_element(1, x)).collect()
    }

    #[test]
    fn rms_examples() {
        let u = scalars(&[1.0, 2.0, 3.0]);
        assert_eq!(rms_error(&u, &u).unwrap(), 0.0);
        assert_relative_eq!(rms_error(&scalars(&[1.1, 2.1, 3.1]), &u).unwrap(), 0.1, epsilon = 1e-12);
        assert_relative_eq!(rms_error(&scalars(&[0.0, 0.2]), &scalars(&[0.0, 0.0])).unwrap(), 0.02f64.sqrt(), epsilon = 1e-15);
        assert!(rms_error(&u[..2], &u).is_err());
    }

    #[test]
    fn summary_statistics() {
        assert_relative_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_relative_eq!(std_dev(&[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    }
}
