//! Bounded zero-mean noise.
//!
//! A draw of dimension `n` is bounded by `b` in the 2-norm: every component
//! lives in `[-b/sqrt(n), b/sqrt(n)]`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseFamily {
    #[default]
    Uniform,
    /// Gaussian with standard deviation half the component bound, truncated
    /// at two standard deviations.
    TruncatedGaussian,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub bound: f64,
    pub family: NoiseFamily,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(bound: f64, family: NoiseFamily, seed: u64) -> Result<Self> {
        if !(bound >= 0.0) || !bound.is_finite() {
            return Err(Error::InvalidArgument(format!("noise bound must be >= 0, got {bound}")));
        }
        Ok(Self { bound, family, seed })
    }

    pub fn uniform(bound: f64, seed: u64) -> Self {
        Self { bound: bound.max(0.0), family: NoiseFamily::Uniform, seed }
    }

    pub fn zero() -> Self {
        Self { bound: 0.0, family: NoiseFamily::Zero, seed: 0 }
    }

    pub fn is_zero(&self) -> bool {
        self.family == NoiseFamily::Zero || self.bound == 0.0
    }

    /// Per-component bound for a draw of dimension `dim`.
    pub fn component_bound(&self, dim: usize) -> f64 {
        if dim == 0 {
            0.0
        } else {
            self.bound / (dim as f64).sqrt()
        }
    }

    /// Variance of each component of a draw of dimension `dim`.
    pub fn component_variance(&self, dim: usize) -> f64 {
        let c = self.component_bound(dim);
        match self.family {
            NoiseFamily::Zero => 0.0,
            NoiseFamily::Uniform => c * c / 3.0,
            NoiseFamily::TruncatedGaussian => {
                let sigma = c / 2.0;
                let a = 2.0_f64;
                let pdf = (-a * a / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
                let mass = statrs::function::erf::erf(a / std::f64::consts::SQRT_2);
                sigma * sigma * (1.0 - 2.0 * a * pdf / mass)
            }
        }
    }

    pub fn stream(&self) -> NoiseStream {
        NoiseStream { model: *self, rng: ChaCha8Rng::seed_from_u64(self.seed) }
    }
}

/// A seeded sequence of noise draws.
pub struct NoiseStream {
    model: NoiseModel,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn draw(&mut self, dim: usize) -> DVector<f64> {
        let c = self.model.component_bound(dim);
        match self.model.family {
            _ if self.model.is_zero() => DVector::zeros(dim),
            NoiseFamily::Zero => DVector::zeros(dim),
            NoiseFamily::Uniform => DVector::from_fn(dim, |_, _| self.rng.random_range(-c..=c)),
            NoiseFamily::TruncatedGaussian => {
                let normal = Normal::new(0.0, c / 2.0).expect("finite sigma");
                DVector::from_fn(dim, |_, _| loop {
                    let v: f64 = normal.sample(&mut self.rng);
                    if v.abs() <= c {
                        break v;
                    }
                })
            }
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_family(family: NoiseFamily) {
        let b = 0.7;
        let dim = 3;
        let n = 100_000;
        let mut s = NoiseModel::new(b, family, 11).unwrap().stream();
        let mut mean = DVector::zeros(dim);
        let mut second = DVector::zeros(dim);
        for _ in 0..n {
            let d = s.draw(dim);
            assert!(d.norm() <= b + 1e-12);
            second += d.component_mul(&d);
            mean += d;
        }
        mean /= n as f64;
        second /= n as f64;
        let tol = 3.0 * b / (n as f64).sqrt();
        for k in 0..dim {
            assert!(mean[k].abs() <= tol, "component {k} mean {}", mean[k]);
        }
        let var = NoiseModel::new(b, family, 0).unwrap().component_variance(dim);
        for k in 0..dim {
            assert!((second[k] - var).abs() < 0.02 * var, "variance {} vs {}", second[k], var);
        }
    }

    #[test]
    fn uniform_is_bounded_and_zero_mean() {
        check_family(NoiseFamily::Uniform);
    }

    #[test]
    fn truncated_gaussian_is_bounded_and_zero_mean() {
        check_family(NoiseFamily::TruncatedGaussian);
    }

    #[test]
    fn zero_family_draws_zeros() {
        let mut s = NoiseModel::new(1.0, NoiseFamily::Zero, 3).unwrap().stream();
        assert_eq!(s.draw(4), DVector::zeros(4));
    }

    #[test]
    fn negative_bound_is_rejected() {
        assert!(NoiseModel::new(-1.0, NoiseFamily::Uniform, 0).is_err());
    }
}
