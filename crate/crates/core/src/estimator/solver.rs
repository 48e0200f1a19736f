//! Minimization of `alpha' M alpha` over the probability simplex, with
//! `M = Q + ratio q q'` positive definite.
//!
//! Two monotone methods are provided. Projected gradient descent uses the
//! fixed step `1 / (2 lambda_max(M))`. The active-set method walks faces of
//! the simplex, solving the equality-constrained problem on each face
//! exactly; it terminates in finitely many steps and is the default.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::qp::QpProblem;
use super::simplex::{clamp_and_normalize, project_simplex, WeightVector};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    #[default]
    ActiveSet,
    ProjectedGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Initialization {
    /// All mass on `tau = min(t + 1, T)`, the first output that `u_t` reaches.
    #[default]
    OneHot,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub method: SolverMethod,
    pub init: Initialization,
    /// Bound on the projected-gradient residual at termination.
    pub tol: f64,
    pub max_iter: usize,
    pub power_iterations: usize,
    /// Projected gradient only: monotone Nesterov momentum with restarts.
    pub accelerate: bool,
    #[serde(skip)]
    pub track_history: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: SolverMethod::ActiveSet,
            init: Initialization::OneHot,
            tol: 1e-8,
            max_iter: 5000,
            power_iterations: 50,
            accelerate: true,
            track_history: false,
        }
    }
}

impl SolverOptions {
    pub fn projected_gradient() -> Self {
        Self { method: SolverMethod::ProjectedGradient, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub weights: WeightVector,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `||alpha - P(alpha - eta grad f(alpha))||` at the returned point.
    pub residual: f64,
    /// Objective value after each accepted iterate (only when requested).
    pub history: Vec<f64>,
}

/// Index of the initial one-hot weight for target `t` over `dim` measurements.
pub fn initial_index(t: usize, dim: usize) -> usize {
    (t + 1).min(dim) - 1
}

/// Solves the simplex QP for target time `t`.
pub fn solve_weights(problem: &QpProblem, t: usize, opts: &SolverOptions) -> Result<Solution> {
    solve_with_curvature(problem, t, opts, None)
}

/// As [`solve_weights`], with an optional precomputed `lambda_max(Q)` that
/// replaces per-problem power iteration when only the residual step is
/// needed.
pub(crate) fn solve_with_curvature(
    problem: &QpProblem,
    t: usize,
    opts: &SolverOptions,
    lambda_q: Option<f64>,
) -> Result<Solution> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("solver tolerance must be positive".into()));
    }
    let n = problem.dim();
    let alpha0 = match opts.init {
        Initialization::OneHot => WeightVector::one_hot(n, initial_index(t, n), t).alpha,
        Initialization::Uniform => WeightVector::uniform(n, t).alpha,
    };
    match opts.method {
        SolverMethod::ProjectedGradient => projected_gradient(problem, t, opts, alpha0),
        SolverMethod::ActiveSet => {
            // lambda_max(Q + r q q') <= lambda_max(Q) + r ||q||^2.
            let lambda = match lambda_q {
                Some(l) => l + problem.ratio * problem.bias.norm_squared(),
                None => max_curvature(problem, opts.power_iterations),
            };
            active_set(problem, t, opts, alpha0, 1.0 / (2.0 * lambda.max(f64::MIN_POSITIVE)))
        }
    }
}

/// Largest eigenvalue of `Q + ratio q q'` by power iteration.
pub fn max_curvature(problem: &QpProblem, iterations: usize) -> f64 {
    linalg::power_iteration(problem.dim(), iterations, |v| problem.apply(v))
}

fn residual(problem: &QpProblem, alpha: &DVector<f64>, eta: f64) -> Result<f64> {
    let stepped = alpha - problem.gradient(alpha) * eta;
    Ok((alpha - project_simplex(&stepped)?).norm())
}

/// Fixed-step projected gradient. With `accelerate`, the gradient step is
/// taken from an extrapolated point and only accepted if it does not raise
/// the objective; a rejected step restarts the momentum. Accepted iterates are
/// therefore monotone either way.
fn projected_gradient(problem: &QpProblem, t: usize, opts: &SolverOptions, mut alpha: DVector<f64>) -> Result<Solution> {
    let lambda = max_curvature(problem, opts.power_iterations);
    let mut eta = 1.0 / (2.0 * lambda.max(f64::MIN_POSITIVE));
    let mut f = problem.objective(&alpha);
    let mut history = Vec::new();
    if opts.track_history {
        history.push(f);
    }
    let mut y = alpha.clone();
    let mut momentum = 1.0_f64;
    let mut iterations = 0;
    let mut res = f64::INFINITY;
    while iterations < opts.max_iter {
        iterations += 1;
        let extrapolated = momentum > 1.0;
        let candidate = project_simplex(&(&y - problem.gradient(&y) * eta))?;
        let f_new = problem.objective(&candidate);
        if f_new > f {
            if extrapolated {
                y = alpha.clone();
                momentum = 1.0;
            } else {
                // Power iteration underestimated the curvature; shrink the step.
                eta *= 0.5;
            }
            continue;
        }
        if opts.accelerate {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            y = &candidate + (&candidate - &alpha) * ((momentum - 1.0) / next);
            momentum = next;
            res = residual(problem, &candidate, eta)?;
        } else {
            res = (&alpha - &candidate).norm();
            y = candidate.clone();
        }
        alpha = candidate;
        f = f_new;
        if opts.track_history {
            history.push(f);
        }
        if res <= opts.tol {
            break;
        }
    }
    let res_final = residual(problem, &alpha, eta)?;
    let converged = res.min(res_final) <= opts.tol;
    Ok(Solution {
        weights: WeightVector { alpha, t },
        objective: f,
        converged,
        iterations,
        residual: res_final,
        history,
    })
}

/// Minimizer of `x' M_SS x` subject to `1'x = 1` on the support `s`.
fn face_minimizer(m: &DMatrix<f64>, s: &[usize]) -> Option<DVector<f64>> {
    let k = s.len();
    let sub = DMatrix::from_fn(k, k, |a, b| m[(s[a], s[b])]);
    let ones = DVector::from_element(k, 1.0);
    let x = match sub.clone().cholesky() {
        Some(ch) => ch.solve(&ones),
        None => sub.lu().solve(&ones)?,
    };
    let total = x.sum();
    if !(total.is_finite()) || total == 0.0 {
        return None;
    }
    Some(x / total)
}

fn active_set(
    problem: &QpProblem,
    t: usize,
    opts: &SolverOptions,
    alpha0: DVector<f64>,
    eta: f64,
) -> Result<Solution> {
    let n = problem.dim();
    let m = problem.hessian_half();
    let mut alpha = alpha0;
    let mut support: Vec<usize> = (0..n).filter(|&k| alpha[k] > 0.0).collect();
    let mut f = problem.objective(&alpha);
    let mut history = Vec::new();
    if opts.track_history {
        history.push(f);
    }
    let mut iterations = 0;
    let mut optimal = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let Some(face) = face_minimizer(&m, &support) else {
            break;
        };
        if face.iter().all(|&v| v >= 0.0) {
            let mut next = DVector::zeros(n);
            for (a, &k) in support.iter().enumerate() {
                next[k] = face[a];
            }
            let f_next = problem.objective(&next);
            if f_next <= f {
                alpha = next;
                f = f_next;
            }
            if opts.track_history {
                history.push(f);
            }
            // Multiplier of the sum constraint: common gradient value on the face.
            let grad = &m * &alpha;
            let mu = support.iter().map(|&k| grad[k]).sum::<f64>() / support.len() as f64;
            let slack = 1e-13 * (1.0 + mu.abs());
            let entering = (0..n)
                .filter(|k| !support.contains(k))
                .map(|k| (k, grad[k] - mu))
                .filter(|&(_, d)| d < -slack)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match entering {
                Some((k, _)) => {
                    support.push(k);
                    support.sort_unstable();
                }
                None => {
                    optimal = true;
                    break;
                }
            }
        } else {
            // Move toward the face minimizer until the first weight hits zero.
            let mut step: f64 = 1.0;
            for (a, &k) in support.iter().enumerate() {
                if face[a] < 0.0 {
                    let s = alpha[k] / (alpha[k] - face[a]);
                    step = step.min(s);
                }
            }
            let mut next = alpha.clone();
            for (a, &k) in support.iter().enumerate() {
                next[k] = alpha[k] + step * (face[a] - alpha[k]);
            }
            let mut dropped = false;
            support.retain(|&k| {
                if next[k] <= 1e-15 {
                    next[k] = 0.0;
                    dropped = true;
                    false
                } else {
                    true
                }
            });
            if !dropped || support.is_empty() {
                break;
            }
            alpha = next;
            f = problem.objective(&alpha);
            if opts.track_history {
                history.push(f);
            }
        }
    }
    clamp_and_normalize(&mut alpha);
    let f_final = problem.objective(&alpha);
    let res = residual(problem, &alpha, eta)?;
    Ok(Solution {
        weights: WeightVector { alpha, t },
        objective: f_final,
        converged: optimal || res <= opts.tol,
        iterations,
        residual: res,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn problem(q: DMatrix<f64>, bias: Vec<f64>, ratio: f64) -> QpProblem {
        QpProblem::new(q, DVector::from_vec(bias), ratio, 1.0).unwrap()
    }

    #[test]
    fn isotropic_q_gives_uniform_weights() {
        for opts in [SolverOptions::default(), SolverOptions::projected_gradient()] {
            let p = problem(DMatrix::identity(5, 5) * 2.0, vec![0.0; 5], 0.0);
            let s = solve_weights(&p, 2, &opts).unwrap();
            assert!(s.converged);
            for a in s.weights.alpha.iter() {
                assert_relative_eq!(*a, 0.2, epsilon = 1e-7);
            }
            assert_relative_eq!(s.objective, 2.0 / 5.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn large_ratio_concentrates_on_zero_bias_index() {
        let p = problem(DMatrix::identity(3, 3) * 2.0, vec![1.0, 0.0, 1.0], 1e8);
        let s = solve_weights(&p, 1, &SolverOptions::default()).unwrap();
        assert!(s.weights.alpha[1] > 1.0 - 1e-6);
        assert_relative_eq!(s.objective, 2.0, epsilon = 1e-4);
    }

    #[test]
    fn objective_never_increases() {
        let q = DMatrix::from_fn(8, 8, |i, j| 1.0 / (1.0 + (i as f64 - j as f64).abs()) + if i == j { 0.5 } else { 0.0 });
        let bias: Vec<f64> = (0..8).map(|k| (k as f64 - 3.0).abs()).collect();
        for (method, accelerate) in
            [(SolverMethod::ActiveSet, false), (SolverMethod::ProjectedGradient, false), (SolverMethod::ProjectedGradient, true)]
        {
            let opts = SolverOptions { method, accelerate, track_history: true, ..SolverOptions::default() };
            let s = solve_weights(&problem(q.clone(), bias.clone(), 0.3), 3, &opts).unwrap();
            assert!(s.history.windows(2).all(|w| w[1] <= w[0] + 1e-15), "{method:?} {accelerate}");
            assert!(s.objective <= s.history[0]);
            assert!(s.weights.is_feasible());
        }
    }

    #[test]
    fn methods_agree() {
        let q = DMatrix::from_fn(10, 10, |i, j| (-((i as f64 - j as f64).powi(2)) / 8.0).exp() + if i == j { 0.2 } else { 0.0 });
        let bias: Vec<f64> = (0..10).map(|k| 0.5 * (k as f64 - 4.0).abs()).collect();
        let p = problem(q, bias, 0.05);
        let a = solve_weights(&p, 4, &SolverOptions::default()).unwrap();
        for accelerate in [false, true] {
            let opts = SolverOptions { max_iter: 200_000, accelerate, ..SolverOptions::projected_gradient() };
            let b = solve_weights(&p, 4, &opts).unwrap();
            assert!(a.converged && b.converged);
            assert!((a.objective - b.objective).abs() < 1e-9);
        }
        assert!(a.residual <= 1e-8);
    }

    #[test]
    fn iteration_cap_is_flagged_not_fatal() {
        let q = DMatrix::from_fn(30, 30, |i, j| 1.0 / (1.0 + i.max(j) as f64) + if i == j { 1e-3 } else { 0.0 });
        let bias: Vec<f64> = (0..30).map(|k| k as f64).collect();
        let opts = SolverOptions { max_iter: 2, ..SolverOptions::projected_gradient() };
        let s = solve_weights(&problem(q, bias, 1e-3), 0, &opts).unwrap();
        assert!(!s.converged);
        assert!(s.weights.is_feasible());
    }

    #[test]
    fn initial_index_clamps_to_horizon() {
        assert_eq!(initial_index(0, 10), 0);
        assert_eq!(initial_index(4, 10), 4);
        assert_eq!(initial_index(9, 10), 9);
        assert_eq!(initial_index(12, 10), 9);
    }
}
