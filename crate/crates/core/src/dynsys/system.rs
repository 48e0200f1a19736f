use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL};

/// A discrete-time linear time-varying system
/// `x_{t+1} = A_t x_t + B_t u_t + e_t`, `y_t = C_t x_t + v_t`
/// with matrices stored for every `t` in `0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvSystem {
    n_x: usize,
    n_u: usize,
    n_y: usize,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    c: Vec<DMatrix<f64>>,
}

impl LtvSystem {
    /// Builds a time-varying system from per-step matrices. All three sequences
    /// must have `horizon + 1` entries.
    pub fn new(a: Vec<DMatrix<f64>>, b: Vec<DMatrix<f64>>, c: Vec<DMatrix<f64>>) -> Result<Self> {
        if a.len() < 2 || a.len() != b.len() || a.len() != c.len() {
            return Err(Error::Dimension(format!(
                "matrix sequences must share a length >= 2 (got A:{}, B:{}, C:{})",
                a.len(),
                b.len(),
                c.len()
            )));
        }
        let n_x = a[0].nrows();
        let n_u = b[0].ncols();
        let n_y = c[0].nrows();
        if n_x == 0 || n_u == 0 || n_y == 0 {
            return Err(Error::Dimension("dimensions must be positive".into()));
        }
        for t in 0..a.len() {
            if a[t].shape() != (n_x, n_x) {
                return Err(Error::Dimension(format!("A_{t} is {:?}, expected ({n_x}, {n_x})", a[t].shape())));
            }
            if b[t].shape() != (n_x, n_u) {
                return Err(Error::Dimension(format!("B_{t} is {:?}, expected ({n_x}, {n_u})", b[t].shape())));
            }
            if c[t].shape() != (n_y, n_x) {
                return Err(Error::Dimension(format!("C_{t} is {:?}, expected ({n_y}, {n_x})", c[t].shape())));
            }
            let finite = a[t].iter().chain(b[t].iter()).chain(c[t].iter()).all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidArgument(format!("non-finite matrix entry at t={t}")));
            }
        }
        Ok(Self { n_x, n_u, n_y, a, b, c })
    }

    /// Time-invariant system replicated over `horizon + 1` steps.
    pub fn lti(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        let k = horizon + 1;
        Self::new(vec![a; k], vec![b; k], vec![c; k])
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }
    pub fn n_u(&self) -> usize {
        self.n_u
    }
    pub fn n_y(&self) -> usize {
        self.n_y
    }
    pub fn horizon(&self) -> usize {
        self.a.len() - 1
    }
    pub fn a(&self, t: usize) -> &DMatrix<f64> {
        &self.a[t]
    }
    pub fn b(&self, t: usize) -> &DMatrix<f64> {
        &self.b[t]
    }
    pub fn c(&self, t: usize) -> &DMatrix<f64> {
        &self.c[t]
    }

    /// Restricts the system to a shorter horizon.
    pub fn truncated(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 || horizon > self.horizon() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate horizon {} to {horizon}",
                self.horizon()
            )));
        }
        let k = horizon + 1;
        Self::new(self.a[..k].to_vec(), self.b[..k].to_vec(), self.c[..k].to_vec())
    }

    /// `Phi_(t,i) = A_{t-1} ... A_i`, with `Phi_(t,t) = I`.
    pub fn state_transition(&self, t: usize, i: usize) -> Result<DMatrix<f64>> {
        if i > t || t > self.horizon() {
            return Err(Error::IndexOutOfRange { t, i, horizon: self.horizon() });
        }
        let mut phi = DMatrix::identity(self.n_x, self.n_x);
        for k in i..t {
            phi = &self.a[k] * phi;
        }
        Ok(phi)
    }

    pub fn is_input_identity(&self) -> bool {
        self.n_u == self.n_x && self.b.iter().all(|b| (b - DMatrix::identity(self.n_x, self.n_x)).amax() == 0.0)
    }

    /// Rewrites the system for the input `B_t u_t`, so that the returned system
    /// has `B_t = I`. The recovery map takes an estimate of `B_t u_t` back to
    /// an estimate of `u_t` through `B_t^+`.
    pub fn absorb_input_matrix(&self) -> Result<(LtvSystem, InputRecovery)> {
        if self.is_input_identity() {
            return Ok((self.clone(), InputRecovery { b_pinv: None }));
        }
        let mut pinvs = Vec::with_capacity(self.b.len());
        for (t, b) in self.b.iter().enumerate() {
            let p = linalg::pinv_full_column_rank(b, RANK_TOL).ok_or(Error::RankDeficientInput { t })?;
            pinvs.push(p);
        }
        let eye = DMatrix::identity(self.n_x, self.n_x);
        let absorbed = LtvSystem {
            n_x: self.n_x,
            n_u: self.n_x,
            n_y: self.n_y,
            a: self.a.clone(),
            b: vec![eye; self.b.len()],
            c: self.c.clone(),
        };
        Ok((absorbed, InputRecovery { b_pinv: Some(pinvs) }))
    }

    /// Adds independent `N(0, sigma^2)` noise to every entry of every `A_t`.
    /// `B` and `C` are untouched.
    pub fn perturb(&self, sigma: f64, seed: u64) -> Result<LtvSystem> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
        }
        if sigma == 0.0 {
            return Ok(self.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        let a = self
            .a
            .iter()
            .map(|a| a.map(|v| v + normal.sample(&mut rng)))
            .collect();
        Ok(LtvSystem { a, ..self.clone() })
    }
}

/// Maps estimates of the absorbed input `B_t u_t` back to `u_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputRecovery {
    b_pinv: Option<Vec<DMatrix<f64>>>,
}

impl InputRecovery {
    pub fn identity() -> Self {
        Self { b_pinv: None }
    }

    pub fn is_identity(&self) -> bool {
        self.b_pinv.is_none()
    }

    pub fn recover(&self, t: usize, absorbed: &DVector<f64>) -> DVector<f64> {
        match &self.b_pinv {
            None => absorbed.clone(),
            Some(p) => &p[t] * absorbed,
        }
    }

    /// Induced norm of `B_t^+` (1 for the identity map).
    pub fn gain(&self, t: usize) -> f64 {
        match &self.b_pinv {
            None => 1.0,
            Some(p) => linalg::norm2(&p[t]),
        }
    }
}
