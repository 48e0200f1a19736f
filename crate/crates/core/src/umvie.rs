//! Unbiased minimum-variance joint input and state filter (no direct
//! feedthrough). Used as the baseline estimator.
//!
//! One step, from `(x_hat_t, P_t)` and the measurement `y_{t+1}`:
//!
//! ```text
//! x-  = A x_hat                 P-  = A P A' + Qn
//! R~  = C P- C' + Rn            F   = C B
//! M   = (F' R~^-1 F)^-1 F' R~^-1
//! d   = M (y - C x-)                              input estimate of u_t
//! x*  = x- + B d
//! K   = P- C' R~^-1
//! x+  = x* + K (y - C x*)
//! ```
//!
//! `M F = I` and `K (I - F M) F = 0` keep both estimates unbiased. The
//! covariance update uses the exact error recursion
//! `e+ = e~ - L (C e~ + v)` with `L = B M + K (I - F M)`.

use nalgebra::{DMatrix, DVector};

use crate::dynsys::{Episode, LtvSystem};
use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL};
use crate::noise::NoiseModel;

/// Condition number above which the innovation covariance is regularized.
pub const MAX_CONDITION: f64 = 1e12;
pub const REGULARIZATION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct UmvFilterState {
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    pub t: usize,
    pub qn: DMatrix<f64>,
    pub rn: DMatrix<f64>,
}

fn check_psd(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.shape() != (n, n) {
        return Err(Error::Dimension(format!("{name} is {:?}, expected ({n}, {n})", m.shape())));
    }
    if !linalg::is_symmetric(m, 1e-12) {
        return Err(Error::InvalidArgument(format!("{name} is not symmetric")));
    }
    let min_eig = m.clone().symmetric_eigen().eigenvalues.min();
    if min_eig < -1e-10 * (1.0 + m.amax()) {
        return Err(Error::InvalidArgument(format!("{name} is not positive semidefinite")));
    }
    Ok(())
}

pub fn umv_init(x0_hat: DVector<f64>, p0: DMatrix<f64>, qn: DMatrix<f64>, rn: DMatrix<f64>) -> Result<UmvFilterState> {
    let n_x = x0_hat.len();
    check_psd("P0", &p0, n_x)?;
    check_psd("Qn", &qn, n_x)?;
    check_psd("Rn", &rn, rn.nrows())?;
    Ok(UmvFilterState { x_hat: x0_hat, p: p0, t: 0, qn, rn })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UmvStep {
    /// Estimate of `u_t`.
    pub input: DVector<f64>,
    pub state: UmvFilterState,
    /// Whether the innovation covariance had to be regularized.
    pub regularized: bool,
}

fn inverse_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse()).or_else(|| m.clone().try_inverse())
}

/// One filter step with the system matrices `A_t`, `B_t`, `C_{t+1}`.
pub fn umv_step(
    state: &UmvFilterState,
    y_next: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c_next: &DMatrix<f64>,
) -> Result<UmvStep> {
    let t = state.t;
    let n_x = state.x_hat.len();
    if a.shape() != (n_x, n_x) || b.nrows() != n_x || c_next.ncols() != n_x || c_next.nrows() != y_next.len() {
        return Err(Error::Dimension(format!("filter step at t={t} received inconsistent matrices")));
    }
    let f = c_next * b;
    if linalg::rank(&f, RANK_TOL) < b.ncols() {
        return Err(Error::InputNotEstimable { t });
    }

    let x_pred = a * &state.x_hat;
    let p_pred = a * &state.p * a.transpose() + &state.qn;
    let mut r_tilde = c_next * &p_pred * c_next.transpose() + &state.rn;
    r_tilde = (&r_tilde + r_tilde.transpose()) * 0.5;
    let mut regularized = false;
    if linalg::condition_number(&r_tilde) > MAX_CONDITION {
        let n_y = r_tilde.nrows();
        r_tilde += DMatrix::<f64>::identity(n_y, n_y) * REGULARIZATION;
        regularized = true;
    }
    let r_inv = match inverse_spd(&r_tilde) {
        Some(inv) => inv,
        None => linalg::pinv_full_column_rank(&r_tilde, 0.0).ok_or(Error::InputNotEstimable { t })?,
    };

    let ft_r = f.transpose() * &r_inv;
    let info = &ft_r * &f;
    let info_inv = inverse_spd(&info).ok_or(Error::InputNotEstimable { t })?;
    let m = info_inv * ft_r;

    let innovation = y_next - c_next * &x_pred;
    let d_hat = &m * &innovation;
    let x_star = &x_pred + b * &d_hat;
    let k = &p_pred * c_next.transpose() * &r_inv;
    let x_new = &x_star + &k * (y_next - c_next * &x_star);

    let n_y = y_next.len();
    let l = b * &m + &k * (DMatrix::<f64>::identity(n_y, n_y) - &f * &m);
    let lcp = &l * c_next * &p_pred;
    let p_new = &p_pred - &lcp - lcp.transpose() + &l * &r_tilde * l.transpose();
    let p_new = linalg::make_psd(&p_new);

    Ok(UmvStep {
        input: d_hat,
        state: UmvFilterState { x_hat: x_new, p: p_new, t: t + 1, qn: state.qn.clone(), rn: state.rn.clone() },
        regularized,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UmvRun {
    pub estimates: Vec<DVector<f64>>,
    pub states: Vec<DVector<f64>>,
    pub regularized_steps: usize,
}

/// Noise covariances matching a bounded noise model: process, measurement
/// and initial-state error are all drawn from `noise`.
pub fn covariances_for(noise: &NoiseModel, n_x: usize, n_y: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let vx = noise.component_variance(n_x);
    let vy = noise.component_variance(n_y);
    let p0 = DMatrix::identity(n_x, n_x) * vx;
    (p0.clone(), p0, DMatrix::identity(n_y, n_y) * vy)
}

/// Runs the filter over a whole episode, producing `u_0 .. u_{T-1}`.
pub fn umv_run(system: &LtvSystem, episode: &Episode, p0: DMatrix<f64>, qn: DMatrix<f64>, rn: DMatrix<f64>) -> Result<UmvRun> {
    let horizon = episode.horizon();
    if system.horizon() < horizon {
        return Err(Error::Dimension(format!(
            "episode horizon {horizon} exceeds system horizon {}",
            system.horizon()
        )));
    }
    let mut state = umv_init(episode.x0_hat.clone(), p0, qn, rn)?;
    let mut estimates = Vec::with_capacity(horizon);
    let mut states = vec![state.x_hat.clone()];
    let mut regularized_steps = 0;
    for t in 0..horizon {
        let step = umv_step(&state, episode.output(t + 1), system.a(t), system.b(t), system.c(t + 1))?;
        regularized_steps += step.regularized as usize;
        estimates.push(step.input);
        state = step.state;
        states.push(state.x_hat.clone());
    }
    Ok(UmvRun { estimates, states, regularized_steps })
}

/// Filter run with covariances taken from the simulation noise model.
pub fn umv_estimate(system: &LtvSystem, episode: &Episode, noise: &NoiseModel) -> Result<UmvRun> {
    let (p0, qn, rn) = covariances_for(noise, system.n_x(), system.n_y());
    umv_run(system, episode, p0, qn, rn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::simulate_open_loop;
    use approx::assert_relative_eq;

    #[test]
    fn init_contract() {
        let eye = DMatrix::<f64>::identity(2, 2);
        let s = umv_init(DVector::zeros(2), eye.clone(), eye.clone(), eye.clone()).unwrap();
        assert_eq!(s.t, 0);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(umv_init(DVector::zeros(2), asym, eye.clone(), eye.clone()).is_err());
        assert!(umv_init(DVector::from_element(2, 1.0), DMatrix::zeros(2, 2), eye.clone(), eye).is_ok());
    }

    #[test]
    fn noiseless_scalar_inversion() {
        let s = LtvSystem::lti(
            DMatrix::from_element(1, 1, 0.8),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            30,
        )
        .unwrap();
        let u: Vec<DVector<f64>> = (0..30).map(|t| DVector::from_element(1, (0.3 * t as f64).sin() + 0.1 * t as f64)).collect();
        let ep = simulate_open_loop(&s, &u, &NoiseModel::zero(), &DVector::from_element(1, 0.4)).unwrap();
        let run = umv_estimate(&s, &ep, &NoiseModel::zero()).unwrap();
        for (d, u) in run.estimates.iter().zip(&u) {
            assert_relative_eq!(d[0], u[0], epsilon = 1e-9);
        }
    }

    #[test]
    fn input_not_estimable() {
        // Input enters a state the output never sees within one step.
        let s = LtvSystem::lti(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            5,
        )
        .unwrap();
        let ep = simulate_open_loop(&s, &vec![DVector::from_element(1, 1.0); 5], &NoiseModel::zero(), &DVector::zeros(2)).unwrap();
        assert!(matches!(umv_estimate(&s, &ep, &NoiseModel::zero()), Err(Error::InputNotEstimable { t: 0 })));
    }

    #[test]
    fn covariance_stays_psd() {
        let s = LtvSystem::lti(
            DMatrix::from_row_slice(2, 2, &[0.99, 0.1, -0.1, 0.98]),
            DMatrix::from_column_slice(2, 1, &[0.005, 0.1]),
            DMatrix::identity(2, 2),
            60,
        )
        .unwrap();
        let noise = NoiseModel::uniform(0.2, 8);
        let ep = simulate_open_loop(&s, &vec![DVector::from_element(1, 1.0); 60], &noise, &DVector::zeros(2)).unwrap();
        let (p0, qn, rn) = covariances_for(&noise, 2, 2);
        let mut state = umv_init(ep.x0_hat.clone(), p0, qn, rn).unwrap();
        for t in 0..60 {
            state = umv_step(&state, ep.output(t + 1), s.a(t), s.b(t), s.c(t + 1)).unwrap().state;
            assert!(linalg::is_symmetric(&state.p, 1e-12));
            assert!(state.p.clone().symmetric_eigen().eigenvalues.min() >= -1e-10);
        }
    }
}
