use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metric::DistanceMetric;
use super::qp::{build_bias_vector, build_q_matrix, QpProblem};
use super::simplex::WeightVector;
use super::solver::{solve_with_curvature, SolverOptions};
use crate::dynsys::{Episode, InputRecovery, LtvSystem, TransitionCache};
use crate::error::{Error, Result};
use crate::linalg;

/// Hyperparameters of the estimator. Only the Lipschitz-to-noise ratio
/// affects the weights; the variance constant only scales the reported
/// bounds (they are in units of `V` when it is absent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub ratio: f64,
    #[serde(default)]
    pub metric: DistanceMetric,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub variance_constant: Option<f64>,
}

impl EstimatorConfig {
    pub fn with_ratio(ratio: f64) -> Self {
        Self { ratio, metric: DistanceMetric::default(), solver: SolverOptions::default(), variance_constant: None }
    }
}

/// `(C_tau H_tau)^+ (y_tau - C_tau Phi_(tau,0) x0_hat)`: the input that, held
/// constant, explains the measurement at `tau`.
pub fn inverted_measurement(cache: &TransitionCache, episode: &Episode, tau: usize) -> DVector<f64> {
    let free = cache.c(tau) * (cache.phi_from_zero(tau) * &episode.x0_hat);
    cache.ch_pinv(tau) * (episode.output(tau) - free)
}

/// `u_t = sum_tau alpha_t[tau] (C_tau H_tau)^+ (y_tau - C_tau Phi_(tau,0) x0_hat)`
/// for a system whose input matrix has been absorbed.
pub fn estimate_input(weights: &WeightVector, episode: &Episode, cache: &TransitionCache) -> Result<DVector<f64>> {
    let horizon = weights.len();
    if horizon > cache.horizon() || horizon > episode.horizon() {
        return Err(Error::Dimension(format!(
            "weights of length {horizon} for cache horizon {} and episode horizon {}",
            cache.horizon(),
            episode.horizon()
        )));
    }
    if episode.x0_hat.len() != cache.n_x() {
        return Err(Error::Dimension("initial state does not match the system".into()));
    }
    let mut u = DVector::zeros(cache.n_x());
    for (k, &a) in weights.alpha.iter().enumerate() {
        if a != 0.0 {
            u += inverted_measurement(cache, episode, k + 1) * a;
        }
    }
    Ok(u)
}

/// High-probability bound `2 V alpha' (Q + ratio q q') alpha` on the squared
/// estimation error.
pub fn error_bound(weights: &WeightVector, problem: &QpProblem) -> f64 {
    (2.0 * problem.variance_constant * problem.objective(&weights.alpha)).max(0.0)
}

/// Per-target count of weights above `threshold`.
pub fn sparsity_profile(weights: &[WeightVector], threshold: f64) -> Result<Vec<usize>> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {threshold}")));
    }
    Ok(weights.iter().map(|w| w.count_above(threshold)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSequence {
    /// `u_0 .. u_{T-1}` in the original input coordinates.
    pub estimates: Vec<DVector<f64>>,
    /// Bounds on `||u_hat_t - u_t||^2` in the original input coordinates.
    pub bounds: Vec<f64>,
    pub weights: Vec<WeightVector>,
    pub converged: Vec<bool>,
}

impl EstimateSequence {
    pub fn nonconverged(&self) -> usize {
        self.converged.iter().filter(|&&c| !c).count()
    }
}

/// Everything about one episode that does not depend on the hyperparameters:
/// the transition cache of the absorbed system, `Q`, and the inverted
/// measurements. Reused across ratios during cross-validation.
#[derive(Debug, Clone)]
pub struct PreparedEpisode {
    cache: TransitionCache,
    recovery: InputRecovery,
    q_matrix: DMatrix<f64>,
    lambda_q: f64,
    inverted: Vec<DVector<f64>>,
    outputs: Vec<DVector<f64>>,
}

impl PreparedEpisode {
    pub fn new(system: &LtvSystem, episode: &Episode) -> Result<Self> {
        let horizon = episode.horizon();
        if horizon == 0 || system.horizon() < horizon {
            return Err(Error::Dimension(format!(
                "episode horizon {horizon} exceeds system horizon {}",
                system.horizon()
            )));
        }
        if episode.initial_output.len() != system.n_y() || episode.x0_hat.len() != system.n_x() {
            return Err(Error::Dimension("episode does not match system dimensions".into()));
        }
        let system = if system.horizon() > horizon { system.truncated(horizon)? } else { system.clone() };
        let (absorbed, recovery) = system.absorb_input_matrix()?;
        let cache = TransitionCache::build(&absorbed)?;
        let q_matrix = build_q_matrix(&cache, horizon)?;
        let lambda_q = linalg::power_iteration(horizon, 50, |v| &q_matrix * v);
        // Power iteration approaches lambda_max from below; pad it so the
        // residual step stays within the descent region.
        let lambda_q = lambda_q * 1.01 + 1e-12;
        let inverted = (1..=horizon).map(|tau| inverted_measurement(&cache, episode, tau)).collect();
        Ok(Self { cache, recovery, q_matrix, lambda_q, inverted, outputs: episode.all_outputs() })
    }

    pub fn horizon(&self) -> usize {
        self.inverted.len()
    }

    pub fn cache(&self) -> &TransitionCache {
        &self.cache
    }

    pub fn recovery(&self) -> &InputRecovery {
        &self.recovery
    }

    pub fn q_matrix(&self) -> &DMatrix<f64> {
        &self.q_matrix
    }

    pub fn bias_vector(&self, t: usize, metric: &DistanceMetric) -> Result<DVector<f64>> {
        build_bias_vector(&self.cache, t, metric, &self.outputs)
    }

    pub fn bias_vectors(&self, metric: &DistanceMetric) -> Result<Vec<DVector<f64>>> {
        (0..self.horizon()).map(|t| self.bias_vector(t, metric)).collect()
    }

    pub fn problem(&self, bias: DVector<f64>, config: &EstimatorConfig) -> Result<QpProblem> {
        QpProblem::new(self.q_matrix.clone(), bias, config.ratio, config.variance_constant.unwrap_or(1.0))
    }

    /// Estimate of the absorbed input `B_t u_t` from given weights.
    pub fn absorbed_estimate(&self, weights: &WeightVector) -> DVector<f64> {
        let mut u = DVector::zeros(self.cache.n_x());
        for (k, &a) in weights.alpha.iter().enumerate() {
            if a != 0.0 {
                u.axpy(a, &self.inverted[k], 1.0);
            }
        }
        u
    }

    pub fn estimate(&self, config: &EstimatorConfig) -> Result<EstimateSequence> {
        let biases = self.bias_vectors(&config.metric)?;
        self.estimate_with_bias(&biases, config)
    }

    /// Runs the per-target problems with precomputed bias vectors.
    pub fn estimate_with_bias(&self, biases: &[DVector<f64>], config: &EstimatorConfig) -> Result<EstimateSequence> {
        if !config.metric.is_valid() {
            return Err(Error::InvalidArgument("metric weights must be finite and >= 0".into()));
        }
        if biases.len() != self.horizon() {
            return Err(Error::Dimension("one bias vector per target time is required".into()));
        }
        let variance = config.variance_constant.unwrap_or(1.0);
        let per_t: Vec<(DVector<f64>, f64, WeightVector, bool)> = (0..self.horizon())
            .into_par_iter()
            .map(|t| {
                let problem = QpProblem::new(self.q_matrix.clone(), biases[t].clone(), config.ratio, variance)?;
                let sol = solve_with_curvature(&problem, t, &config.solver, Some(self.lambda_q))?;
                let absorbed = self.absorbed_estimate(&sol.weights);
                let gain = self.recovery.gain(t);
                let bound = error_bound(&sol.weights, &problem) * gain * gain;
                Ok((self.recovery.recover(t, &absorbed), bound, sol.weights, sol.converged))
            })
            .collect::<Result<_>>()?;
        let mut out = EstimateSequence {
            estimates: Vec::with_capacity(per_t.len()),
            bounds: Vec::with_capacity(per_t.len()),
            weights: Vec::with_capacity(per_t.len()),
            converged: Vec::with_capacity(per_t.len()),
        };
        for (u, b, w, c) in per_t {
            out.estimates.push(u);
            out.bounds.push(b);
            out.weights.push(w);
            out.converged.push(c);
        }
        Ok(out)
    }
}

/// Estimates `u_0 .. u_{T-1}` for one episode: absorbs the input matrix,
/// builds `Q` once, then solves one simplex problem per target time.
pub fn estimate_sequence(episode: &Episode, system: &LtvSystem, config: &EstimatorConfig) -> Result<EstimateSequence> {
    PreparedEpisode::new(system, episode)?.estimate(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::simulate_open_loop;
    use crate::noise::NoiseModel;
    use approx::assert_relative_eq;

    fn spring_like(horizon: usize) -> LtvSystem {
        LtvSystem::lti(
            DMatrix::from_row_slice(2, 2, &[0.995, 0.0998, -0.0998, 0.975]),
            DMatrix::from_column_slice(2, 1, &[0.005, 0.0998]),
            DMatrix::identity(2, 2),
            horizon,
        )
        .unwrap()
    }

    #[test]
    fn constant_input_is_exact_for_any_weights() {
        let s = spring_like(30);
        let u = vec![DVector::from_element(1, 0.7); 30];
        let ep = simulate_open_loop(&s, &u, &NoiseModel::zero(), &DVector::from_vec(vec![0.3, -0.2])).unwrap();
        let prep = PreparedEpisode::new(&s, &ep).unwrap();
        let w = WeightVector { alpha: DVector::from_fn(30, |k, _| (k + 1) as f64 / 465.0), t: 5 };
        let est = prep.recovery().recover(5, &prep.absorbed_estimate(&w));
        assert_relative_eq!(est[0], 0.7, epsilon = 1e-9);
        let seq = estimate_sequence(&ep, &s, &EstimatorConfig::with_ratio(0.1)).unwrap();
        for e in &seq.estimates {
            assert_relative_eq!(e[0], 0.7, epsilon = 1e-8);
        }
    }

    #[test]
    fn one_hot_weights_invert_single_measurement() {
        let s = spring_like(20);
        let (abs, _) = s.absorb_input_matrix().unwrap();
        let u: Vec<DVector<f64>> = (0..20).map(|t| DVector::from_element(1, (0.4 * t as f64).sin())).collect();
        let ep = simulate_open_loop(&s, &u, &NoiseModel::zero(), &DVector::zeros(2)).unwrap();
        let cache = TransitionCache::build(&abs).unwrap();
        let tau = 7;
        let w = WeightVector::one_hot(20, tau - 1, 3);
        let est = estimate_input(&w, &ep, &cache).unwrap();
        let mut direct = DVector::zeros(2);
        for i in 0..tau {
            direct += abs.state_transition(tau, i + 1).unwrap() * (s.b(i) * &u[i]);
        }
        let direct = cache.ch_pinv(tau) * (s.c(tau) * direct);
        assert!((est - direct).amax() < 1e-10);
    }

    #[test]
    fn zero_data_gives_zero_estimate() {
        let s = spring_like(10);
        let ep = simulate_open_loop(&s, &vec![DVector::zeros(1); 10], &NoiseModel::zero(), &DVector::zeros(2)).unwrap();
        let seq = estimate_sequence(&ep, &s, &EstimatorConfig::with_ratio(1.0)).unwrap();
        assert!(seq.estimates.iter().all(|e| e.amax() == 0.0));
    }

    #[test]
    fn shapes_and_determinism() {
        let s = spring_like(25);
        let u: Vec<DVector<f64>> = (0..25).map(|t| DVector::from_element(1, (t as f64 / 5.0).cos())).collect();
        let ep = simulate_open_loop(&s, &u, &NoiseModel::uniform(0.05, 3), &DVector::zeros(2)).unwrap();
        let cfg = EstimatorConfig::with_ratio(0.5);
        let a = estimate_sequence(&ep, &s, &cfg).unwrap();
        let b = estimate_sequence(&ep, &s, &cfg).unwrap();
        assert_eq!(a.estimates.len(), 25);
        assert_eq!(a.bounds.len(), 25);
        assert_eq!(a.weights.len(), 25);
        assert_eq!(a, b);
        assert!(a.weights.iter().all(|w| w.is_feasible()));
    }

    #[test]
    fn bound_examples() {
        let q = DMatrix::identity(4, 4) * 2.0;
        let p = QpProblem::new(q, DVector::zeros(4), 0.0, 1.0).unwrap();
        assert_relative_eq!(error_bound(&WeightVector::uniform(4, 0), &p), 1.0, epsilon = 1e-15);
        let p0 = QpProblem::new(DMatrix::identity(4, 4), DVector::zeros(4), 3.0, 0.0).unwrap();
        assert_eq!(error_bound(&WeightVector::uniform(4, 0), &p0), 0.0);
    }

    #[test]
    fn sparsity_counts() {
        let w = vec![WeightVector::one_hot(6, 2, 0), WeightVector::uniform(6, 1)];
        assert_eq!(sparsity_profile(&w, 0.1).unwrap(), vec![1, 6]);
        assert!(sparsity_profile(&w, 0.0).is_err());
    }
}
