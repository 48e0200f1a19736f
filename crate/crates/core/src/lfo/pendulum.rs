use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynsys::{Episode, NonlinearSystem};
use crate::error::{Error, Result};
use crate::noise::NoiseModel;

/// Inverted pendulum with `phi = 0` upright. The controller output `a` enters
/// the dynamics as the torque `-a`:
///
/// `omega' = (g / l) sin(phi) - a / (m l^2) - damping * omega`,
///
/// integrated with semi-implicit Euler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub damping: f64,
    pub dt: f64,
    pub torque_limit: f64,
    /// Relative standard deviation of the per-episode parameter perturbation.
    pub perturbation: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self { mass: 1.0, length: 1.0, gravity: 10.0, damping: 0.05, dt: 0.05, torque_limit: 100.0, perturbation: 0.10 }
    }
}

pub fn wrap_angle(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// `15 sin(phi) + 30 phi + 8 omega`, before saturation.
pub fn expert_control(phi: f64, omega: f64) -> f64 {
    15.0 * phi.sin() + 30.0 * phi + 8.0 * omega
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.mass, self.length, self.gravity, self.damping, self.dt, self.torque_limit];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("pendulum parameters must be positive and finite".into()));
        }
        if !(self.perturbation >= 0.0) || self.perturbation >= 1.0 / 3.0 {
            return Err(Error::InvalidArgument("perturbation fraction must lie in [0, 1/3)".into()));
        }
        Ok(())
    }

    /// Copy with mass, length and damping scaled by independent factors
    /// `1 + N(0, f^2)` clipped to `[1 - 3f, 1 + 3f]`.
    pub fn perturbed(&self, seed: u64) -> Self {
        let f = self.perturbation;
        if f == 0.0 {
            return *self;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, f).expect("finite perturbation");
        let mut factor = || 1.0 + normal.sample(&mut rng).clamp(-3.0 * f, 3.0 * f);
        Self { mass: self.mass * factor(), length: self.length * factor(), damping: self.damping * factor(), ..*self }
    }

    fn inertia_inv(&self) -> f64 {
        1.0 / (self.mass * self.length * self.length)
    }

    pub fn saturate(&self, a: f64) -> f64 {
        a.clamp(-self.torque_limit, self.torque_limit)
    }

    /// One integration step under controller output `a` (already saturated).
    pub fn step(&self, phi: f64, omega: f64, a: f64) -> (f64, f64) {
        let acc = self.gravity / self.length * phi.sin() - a * self.inertia_inv() - self.damping * omega;
        let omega_next = omega + self.dt * acc;
        (phi + self.dt * omega_next, omega_next)
    }

    /// Discrete linearization at the upright equilibrium, `x' = A x + B a`.
    pub fn upright_linearization(&self) -> (Matrix2<f64>, Vector2<f64>) {
        let (dt, gl, d, bi) = (self.dt, self.gravity / self.length, self.damping, self.inertia_inv());
        let a = Matrix2::new(1.0 + dt * dt * gl, dt * (1.0 - dt * d), dt * gl, 1.0 - dt * d);
        let b = Vector2::new(-dt * dt * bi, -dt * bi);
        (a, b)
    }

    /// Control-affine model of the discretized pendulum, measured through
    /// `C = I`. The angle is not wrapped, so the model is smooth.
    pub fn model(&self) -> NonlinearSystem {
        let p = *self;
        let (dt, gl, d, bi) = (p.dt, p.gravity / p.length, p.damping, p.inertia_inv());
        let b = DMatrix::from_column_slice(2, 1, &[-dt * dt * bi, -dt * bi]);
        NonlinearSystem {
            n_x: 2,
            n_u: 1,
            g: Arc::new(move |x| {
                let omega = x[1] + dt * (gl * x[0].sin() - d * x[1]);
                DVector::from_vec(vec![x[0] + dt * omega, omega])
            }),
            h: Arc::new(move |_| b.clone()),
            dg: Arc::new(move |x| {
                let c = gl * x[0].cos();
                DMatrix::from_row_slice(2, 2, &[1.0 + dt * dt * c, dt * (1.0 - dt * d), dt * c, 1.0 - dt * d])
            }),
            dh: NonlinearSystem::constant_input_gain(2, 1),
            c: DMatrix::identity(2, 2),
            dt,
        }
    }
}

/// Linear state feedback `a = k_phi * phi + k_omega * omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy {
    pub k_phi: f64,
    pub k_omega: f64,
}

impl LinearPolicy {
    pub fn act(&self, phi: f64, omega: f64) -> f64 {
        self.k_phi * phi + self.k_omega * omega
    }

    pub fn is_finite(&self) -> bool {
        self.k_phi.is_finite() && self.k_omega.is_finite()
    }
}

/// Who drives a rollout, and what it sees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Controller {
    /// The expert acts on the true state.
    Expert,
    /// A linear policy acting on the noisy measurements.
    Policy(LinearPolicy),
    Zero,
}

/// Eigenvalues of the upright closed loop `A + B K`; stable iff both lie
/// inside the unit circle.
pub fn closed_loop_eigenvalues(policy: &LinearPolicy, params: &PendulumParams) -> [Complex<f64>; 2] {
    let (a, b) = params.upright_linearization();
    let k = nalgebra::RowVector2::new(policy.k_phi, policy.k_omega);
    let m = a + b * k;
    let ev = m.complex_eigenvalues();
    [ev[0], ev[1]]
}

pub fn spectral_radius(eigs: &[Complex<f64>; 2]) -> f64 {
    eigs[0].norm().max(eigs[1].norm())
}

/// Rolls the pendulum out for `steps` steps. Process noise is a scalar
/// added to the controller output before saturation; measurement noise is
/// added to `(phi, omega)`. The measured angle is wrapped to `(-pi, pi]`.
///
/// `true_inputs` holds the saturated controller outputs actually applied.
/// Noise draws interleave as: measurement, then process, every step.
pub fn pendulum_rollout(
    params: &PendulumParams,
    controller: Controller,
    process: &NoiseModel,
    measurement: &NoiseModel,
    x0: (f64, f64),
    steps: usize,
) -> Result<Episode> {
    params.validate()?;
    let mut proc = process.stream();
    let mut meas = measurement.stream();
    let (mut phi, mut omega) = (wrap_angle(x0.0), x0.1);
    let mut states = vec![DVector::from_vec(vec![phi, omega])];
    let mut outputs = Vec::with_capacity(steps);
    let mut inputs = Vec::with_capacity(steps);
    let mut initial_output = DVector::zeros(2);
    for t in 0..=steps {
        let v = meas.draw(2);
        let y = DVector::from_vec(vec![wrap_angle(phi + v[0]), omega + v[1]]);
        if t == 0 {
            initial_output = y.clone();
        } else {
            outputs.push(y.clone());
        }
        if t == steps {
            break;
        }
        let raw = match controller {
            Controller::Expert => expert_control(phi, omega),
            Controller::Policy(p) => p.act(y[0], y[1]),
            Controller::Zero => 0.0,
        };
        let a = params.saturate(raw + proc.draw(1)[0]);
        let (p2, w2) = params.step(phi, omega, a);
        if !p2.is_finite() || !w2.is_finite() {
            return Err(Error::Diverged { t: t + 1 });
        }
        phi = wrap_angle(p2);
        omega = w2;
        inputs.push(DVector::from_element(1, a));
        states.push(DVector::from_vec(vec![phi, omega]));
    }
    Ok(Episode {
        x0_hat: initial_output.clone(),
        x0_true: states[0].clone(),
        initial_output,
        outputs,
        true_inputs: inputs,
        states,
    })
}

/// Stabilization predicate on the final state.
pub fn is_upright(phi: f64, omega: f64) -> bool {
    wrap_angle(phi).abs() <= 0.2 && omega.abs() <= 0.5
}

/// Random start: angle uniform on `[-pi, pi]`, velocity uniform on `[-1, 1]`.
pub fn random_start(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (rng.random_range(-PI..=PI), rng.random_range(-1.0..=1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expert_values() {
        assert_eq!(expert_control(0.0, 0.0), 0.0);
        assert_relative_eq!(expert_control(PI / 2.0, 0.0), 15.0 + 15.0 * PI, epsilon = 1e-12);
        assert_eq!(expert_control(0.0, 1.0), 8.0);
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn expert_holds_upright_without_noise() {
        let p = PendulumParams::default();
        let ep = pendulum_rollout(&p, Controller::Expert, &NoiseModel::zero(), &NoiseModel::zero(), (0.0, 0.0), 2000).unwrap();
        assert!(ep.states.iter().all(|x| x[0].abs() <= 1e-3));
    }

    #[test]
    fn hanging_pendulum_stays_down() {
        let p = PendulumParams::default();
        let ep = pendulum_rollout(&p, Controller::Zero, &NoiseModel::zero(), &NoiseModel::zero(), (PI, 0.0), 2000).unwrap();
        assert!(ep.states.iter().all(|x| wrap_angle(x[0] - PI).abs() <= 1e-6));
    }

    #[test]
    fn energy_is_conserved_without_damping() {
        let p = PendulumParams { damping: 1e-300, ..PendulumParams::default() };
        let energy = |phi: f64, omega: f64| 0.5 * omega * omega + p.gravity / p.length * (phi.cos() - 1.0);
        // Semi-implicit Euler conserves a shadow energy; sample the drift at
        // the turning points of a small swing about the hanging position.
        let ep = pendulum_rollout(&p, Controller::Zero, &NoiseModel::zero(), &NoiseModel::zero(), (PI - 0.5, 0.0), 2000).unwrap();
        let e0 = energy(ep.states[0][0], ep.states[0][1]);
        let worst = ep.states.iter().map(|x| (energy(x[0], x[1]) - e0).abs()).fold(0.0, f64::max);
        assert!(worst / e0.abs() < 0.01, "relative drift {}", worst / e0.abs());
    }

    #[test]
    fn upright_stability() {
        let p = PendulumParams::default();
        let zero = LinearPolicy { k_phi: 0.0, k_omega: 0.0 };
        assert!(spectral_radius(&closed_loop_eigenvalues(&zero, &p)) > 1.0);
        let expert = LinearPolicy { k_phi: 45.0, k_omega: 8.0 };
        assert!(spectral_radius(&closed_loop_eigenvalues(&expert, &p)) < 1.0);
    }

    #[test]
    fn model_matches_simulator() {
        let p = PendulumParams::default();
        let model = p.model();
        let x = DVector::from_vec(vec![0.3, -0.4]);
        let next = model.step(&x, &DVector::from_element(1, 2.0));
        let (phi, omega) = p.step(0.3, -0.4, 2.0);
        assert_relative_eq!(next[0], phi, epsilon = 1e-14);
        assert_relative_eq!(next[1], omega, epsilon = 1e-14);
    }

    #[test]
    fn perturbation_stays_clipped() {
        let p = PendulumParams::default();
        for s in 0..500 {
            let q = p.perturbed(s);
            for (a, b) in [(q.mass, p.mass), (q.length, p.length), (q.damping, p.damping)] {
                assert!((a / b - 1.0).abs() <= 0.3 + 1e-12);
            }
            assert_eq!(q.gravity, p.gravity);
        }
    }
}
