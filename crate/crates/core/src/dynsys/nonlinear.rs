use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::simulate::{rollout, Episode, InputFn};
use super::LtvSystem;
use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL};
use crate::noise::NoiseModel;

pub type VectorMap = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixMap = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// Returns `dh/dx_k` for every state coordinate `k`.
pub type TensorMap = Arc<dyn Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;

/// Discrete-time control-affine system
/// `x_{t+1} = g(x_t) + h(x_t) u_t + e_t`, `y_t = C x_t + v_t`.
#[derive(Clone)]
pub struct NonlinearSystem {
    pub n_x: usize,
    pub n_u: usize,
    pub g: VectorMap,
    pub h: MatrixMap,
    pub dg: MatrixMap,
    pub dh: TensorMap,
    pub c: DMatrix<f64>,
    pub dt: f64,
}

impl fmt::Debug for NonlinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearSystem")
            .field("n_x", &self.n_x)
            .field("n_u", &self.n_u)
            .field("c", &self.c)
            .field("dt", &self.dt)
            .finish_non_exhaustive()
    }
}

impl NonlinearSystem {
    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    /// A zero derivative tensor, for systems whose input gain does not depend
    /// on the state.
    pub fn constant_input_gain(n_x: usize, n_u: usize) -> TensorMap {
        Arc::new(move |_| vec![DMatrix::zeros(n_x, n_u); n_x])
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.g)(x) + (self.h)(x) * u
    }

    pub fn simulate(
        &self,
        inputs: &mut dyn InputFn,
        noise: &NoiseModel,
        x0: &DVector<f64>,
        horizon: usize,
    ) -> Result<Episode> {
        rollout(horizon, self.n_x, self.n_y(), x0, noise, inputs, |_, x, u| self.step(x, u), |_, x| &self.c * x)
    }

    /// Jacobian linearization along the state trajectory recovered from the
    /// outputs, `x_t = C^+ y_t`:
    /// `A_t = dg/dx`, `B_t = h(x_t) + (dh/dx) x_t`, both evaluated at `x_t`.
    ///
    /// `outputs` holds `y_0 .. y_T`; the result has horizon `T`.
    pub fn linearize(&self, outputs: &[DVector<f64>]) -> Result<LtvSystem> {
        if outputs.len() < 2 {
            return Err(Error::InvalidArgument("linearization needs at least two outputs".into()));
        }
        if linalg::rank(&self.c, RANK_TOL) < self.n_x {
            return Err(Error::OutputNotInvertible);
        }
        let c_pinv = linalg::pinv_full_column_rank(&self.c, RANK_TOL).ok_or(Error::OutputNotInvertible)?;
        let mut a = Vec::with_capacity(outputs.len());
        let mut b = Vec::with_capacity(outputs.len());
        for y in outputs {
            if y.len() != self.n_y() {
                return Err(Error::Dimension(format!("output of length {}, expected {}", y.len(), self.n_y())));
            }
            let x = &c_pinv * y;
            a.push((self.dg)(&x));
            let mut b_t = (self.h)(&x);
            // Contraction of the derivative tensor with the state.
            for (k, dh_k) in (self.dh)(&x).iter().enumerate() {
                b_t += dh_k * x[k];
            }
            b.push(b_t);
        }
        LtvSystem::new(a, b, vec![self.c.clone(); outputs.len()])
    }
}
