use nalgebra::DMatrix;

use super::LtvSystem;
use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL};

/// Horizons up to this length keep every `Phi_(t,i)` in memory; longer ones
/// recompute transition matrices on request.
pub const FULL_TABLE_LIMIT: usize = 100;

/// Precomputed transition matrices, impulse-response sums and their norms for
/// one system and horizon. Immutable once built.
#[derive(Debug, Clone)]
pub struct TransitionCache {
    horizon: usize,
    n_x: usize,
    a: Vec<DMatrix<f64>>,
    c: Vec<DMatrix<f64>>,
    phi: Option<Vec<Vec<DMatrix<f64>>>>,
    phi_from_zero: Vec<DMatrix<f64>>,
    h: Vec<DMatrix<f64>>,
    ch_pinv: Vec<DMatrix<f64>>,
    // (C_tau H_tau)^+ C_tau, i.e. H_tau^{-1} when C_tau has full column rank.
    h_inv: Vec<DMatrix<f64>>,
    h_inv_phi_norm: Vec<Vec<f64>>,
    h_inv_norm: Vec<f64>,
    ch_pinv_norm: Vec<f64>,
}

impl TransitionCache {
    /// Builds the cache, failing with the first `tau` at which `C_tau H_tau`
    /// loses full column rank.
    ///
    /// `H_tau = sum_{i<tau} Phi_(tau,i+1)` assumes the input matrix has already
    /// been absorbed (`B_t = I`).
    pub fn build(system: &LtvSystem) -> Result<Self> {
        let horizon = system.horizon();
        let n_x = system.n_x();
        let eye = DMatrix::<f64>::identity(n_x, n_x);
        let keep_table = horizon <= FULL_TABLE_LIMIT;

        let mut phi_table = Vec::new();
        let mut phi_from_zero = Vec::with_capacity(horizon + 1);
        let mut h = Vec::with_capacity(horizon + 1);
        let mut ch_pinv = Vec::with_capacity(horizon + 1);
        let mut h_inv = Vec::with_capacity(horizon + 1);
        let mut h_inv_phi_norm = Vec::with_capacity(horizon + 1);
        let mut h_inv_norm = Vec::with_capacity(horizon + 1);
        let mut ch_pinv_norm = Vec::with_capacity(horizon + 1);

        // Row tau holds Phi_(tau, i) for i = 0..=tau.
        let mut row: Vec<DMatrix<f64>> = vec![eye.clone()];
        for tau in 0..=horizon {
            if tau > 0 {
                let a_prev = system.a(tau - 1);
                let mut next: Vec<DMatrix<f64>> = row.iter().map(|p| a_prev * p).collect();
                next.push(eye.clone());
                row = next;
            }
            phi_from_zero.push(row[0].clone());

            if tau == 0 {
                h.push(DMatrix::zeros(n_x, n_x));
                ch_pinv.push(DMatrix::zeros(n_x, system.n_y()));
                h_inv.push(DMatrix::zeros(n_x, n_x));
                h_inv_phi_norm.push(vec![0.0]);
                h_inv_norm.push(0.0);
                ch_pinv_norm.push(0.0);
            } else {
                let mut h_tau = DMatrix::zeros(n_x, n_x);
                for p in &row[1..] {
                    h_tau += p;
                }
                let c = system.c(tau);
                let ch = c * &h_tau;
                let pinv = linalg::pinv_full_column_rank(&ch, RANK_TOL)
                    .ok_or(Error::NotStronglyObservable { tau })?;
                let hi = &pinv * c;
                h_inv_phi_norm.push(row.iter().map(|p| linalg::norm2(&(&hi * p))).collect());
                h_inv_norm.push(linalg::norm2(&hi));
                ch_pinv_norm.push(linalg::norm2(&pinv));
                h.push(h_tau);
                ch_pinv.push(pinv);
                h_inv.push(hi);
            }
            if keep_table {
                phi_table.push(row.clone());
            }
        }

        Ok(Self {
            horizon,
            n_x,
            a: (0..=horizon).map(|t| system.a(t).clone()).collect(),
            c: (0..=horizon).map(|t| system.c(t).clone()).collect(),
            phi: keep_table.then_some(phi_table),
            phi_from_zero,
            h,
            ch_pinv,
            h_inv,
            h_inv_phi_norm,
            h_inv_norm,
            ch_pinv_norm,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn phi(&self, t: usize, i: usize) -> Result<DMatrix<f64>> {
        if i > t || t > self.horizon {
            return Err(Error::IndexOutOfRange { t, i, horizon: self.horizon });
        }
        if let Some(table) = &self.phi {
            return Ok(table[t][i].clone());
        }
        let mut p = DMatrix::identity(self.n_x, self.n_x);
        for k in i..t {
            p = &self.a[k] * p;
        }
        Ok(p)
    }

    pub fn c(&self, tau: usize) -> &DMatrix<f64> {
        &self.c[tau]
    }

    /// `Phi_(tau, 0)`.
    pub fn phi_from_zero(&self, tau: usize) -> &DMatrix<f64> {
        &self.phi_from_zero[tau]
    }

    /// `H_tau` for `tau >= 1`.
    pub fn h(&self, tau: usize) -> &DMatrix<f64> {
        &self.h[tau]
    }

    /// `(C_tau H_tau)^+` for `tau >= 1`.
    pub fn ch_pinv(&self, tau: usize) -> &DMatrix<f64> {
        &self.ch_pinv[tau]
    }

    /// `H_tau^{-1}` for `tau >= 1`.
    pub fn h_inv(&self, tau: usize) -> &DMatrix<f64> {
        &self.h_inv[tau]
    }

    /// `||H_tau^{-1} Phi_(tau, i)||` for `1 <= tau <= T`, `0 <= i <= tau`.
    pub fn h_inv_phi_norm(&self, tau: usize, i: usize) -> f64 {
        self.h_inv_phi_norm[tau][i]
    }

    /// `||H_tau^{-1}||`.
    pub fn h_inv_norm(&self, tau: usize) -> f64 {
        self.h_inv_norm[tau]
    }

    /// `||(C_tau H_tau)^+||`, the gain applied to measurement noise at `tau`.
    pub fn ch_pinv_norm(&self, tau: usize) -> f64 {
        self.ch_pinv_norm[tau]
    }
}
