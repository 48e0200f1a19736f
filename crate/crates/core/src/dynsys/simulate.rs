use nalgebra::{DMatrix, DVector};

use super::LtvSystem;
use crate::error::{Error, Result};
use crate::noise::{NoiseModel, NoiseStream};

/// Simulation aborts once the state norm exceeds this value.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// One simulated rollout. `outputs[k]` is `y_{k+1}` and `true_inputs[k]` is
/// `u_k`; the true inputs are kept for evaluation only.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub x0_hat: DVector<f64>,
    pub x0_true: DVector<f64>,
    /// `y_0`, the measurement available before the first input is applied.
    pub initial_output: DVector<f64>,
    pub outputs: Vec<DVector<f64>>,
    pub true_inputs: Vec<DVector<f64>>,
    /// `x_0 .. x_T`.
    pub states: Vec<DVector<f64>>,
}

impl Episode {
    pub fn horizon(&self) -> usize {
        self.outputs.len()
    }

    /// `y_t` for `t` in `0..=T`.
    pub fn output(&self, t: usize) -> &DVector<f64> {
        if t == 0 {
            &self.initial_output
        } else {
            &self.outputs[t - 1]
        }
    }

    /// `y_0 .. y_T` as one list.
    pub fn all_outputs(&self) -> Vec<DVector<f64>> {
        std::iter::once(self.initial_output.clone()).chain(self.outputs.iter().cloned()).collect()
    }
}

/// Open-loop or output-feedback input generator, called with `(t, y_t)`.
pub trait InputFn {
    fn input(&mut self, t: usize, y: &DVector<f64>) -> DVector<f64>;
}

impl<F: FnMut(usize, &DVector<f64>) -> DVector<f64>> InputFn for F {
    fn input(&mut self, t: usize, y: &DVector<f64>) -> DVector<f64> {
        self(t, y)
    }
}

/// Shared rollout loop. Noise draws happen in a fixed order: initial-state
/// error, then for every step the measurement noise followed by the process
/// noise.
pub(crate) fn rollout<S, O>(
    horizon: usize,
    n_x: usize,
    n_y: usize,
    x0: &DVector<f64>,
    noise: &NoiseModel,
    inputs: &mut dyn InputFn,
    mut step: S,
    output: O,
) -> Result<Episode>
where
    S: FnMut(usize, &DVector<f64>, &DVector<f64>) -> DVector<f64>,
    O: Fn(usize, &DVector<f64>) -> DVector<f64>,
{
    if x0.len() != n_x {
        return Err(Error::Dimension(format!("x0 has length {}, expected {n_x}", x0.len())));
    }
    let mut stream: NoiseStream = noise.stream();
    let x0_hat = x0 + stream.draw(n_x);
    let mut x = x0.clone();
    let mut states = vec![x.clone()];
    let mut outputs = Vec::with_capacity(horizon);
    let mut true_inputs = Vec::with_capacity(horizon);
    let mut initial_output = DVector::zeros(n_y);
    for t in 0..=horizon {
        let y = output(t, &x) + stream.draw(n_y);
        if t == 0 {
            initial_output = y.clone();
        } else {
            outputs.push(y.clone());
        }
        if t == horizon {
            break;
        }
        let u = inputs.input(t, &y);
        let next = step(t, &x, &u) + stream.draw(n_x);
        if !next.iter().all(|v| v.is_finite()) || next.norm() > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { t: t + 1 });
        }
        true_inputs.push(u);
        x = next;
        states.push(x.clone());
    }
    Ok(Episode { x0_hat, x0_true: x0.clone(), initial_output, outputs, true_inputs, states })
}

/// Simulates the system over its full horizon.
pub fn simulate(
    system: &LtvSystem,
    inputs: &mut dyn InputFn,
    noise: &NoiseModel,
    x0: &DVector<f64>,
) -> Result<Episode> {
    let n_u = system.n_u();
    rollout(
        system.horizon(),
        system.n_x(),
        system.n_y(),
        x0,
        noise,
        inputs,
        |t, x, u: &DVector<f64>| {
            assert_eq!(u.len(), n_u, "input function returned a vector of the wrong length");
            system.a(t) * x + system.b(t) * u
        },
        |t, x| system.c(t) * x,
    )
}

/// Simulates with a precomputed open-loop input sequence.
pub fn simulate_open_loop(
    system: &LtvSystem,
    inputs: &[DVector<f64>],
    noise: &NoiseModel,
    x0: &DVector<f64>,
) -> Result<Episode> {
    if inputs.len() < system.horizon() {
        return Err(Error::Dimension(format!(
            "{} inputs supplied for horizon {}",
            inputs.len(),
            system.horizon()
        )));
    }
    if let Some(u) = inputs.iter().find(|u| u.len() != system.n_u()) {
        return Err(Error::Dimension(format!("input of length {}, expected {}", u.len(), system.n_u())));
    }
    simulate(system, &mut |t: usize, _: &DVector<f64>| inputs[t].clone(), noise, x0)
}

/// Noise-free output predicted by the output decomposition
/// `y_t = C_t (Phi_(t,0) x_0 + sum_i Phi_(t,i+1) B_i u_i)`.
pub fn predicted_output(system: &LtvSystem, x0: &DVector<f64>, inputs: &[DVector<f64>], t: usize) -> DVector<f64> {
    let mut acc: DVector<f64> = system.state_transition(t, 0).expect("t within horizon") * x0;
    for (i, u) in inputs.iter().enumerate().take(t) {
        let phi: DMatrix<f64> = system.state_transition(t, i + 1).expect("i within horizon");
        acc += phi * (system.b(i) * u);
    }
    system.c(t) * acc
}
