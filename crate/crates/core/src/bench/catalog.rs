use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynsys::{LtvSystem, NonlinearSystem};
use crate::error::{Error, Result};
use crate::linalg;

/// Spring-mass parameters: mass, stiffness, damping, sample time.
pub const SPRING_MASS: (f64, f64, f64, f64) = (1.0, 1.0, 0.2, 0.1);
/// Euler step of the nonlinear benchmarks.
pub const NONLINEAR_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemKind {
    SpringMass,
    DoubleIntegrator,
    EmailServer,
    HttpServer,
    RandomStable,
    Nonlin1,
    Nonlin2,
}

impl SystemKind {
    pub const ALL: [SystemKind; 7] = [
        SystemKind::SpringMass,
        SystemKind::DoubleIntegrator,
        SystemKind::EmailServer,
        SystemKind::HttpServer,
        SystemKind::RandomStable,
        SystemKind::Nonlin1,
        SystemKind::Nonlin2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SystemKind::SpringMass => "spring-mass",
            SystemKind::DoubleIntegrator => "double-integrator",
            SystemKind::EmailServer => "email-server",
            SystemKind::HttpServer => "http-server",
            SystemKind::RandomStable => "random-stable",
            SystemKind::Nonlin1 => "nonlin-1",
            SystemKind::Nonlin2 => "nonlin-2",
        }
    }

    pub fn is_nonlinear(&self) -> bool {
        matches!(self, SystemKind::Nonlin1 | SystemKind::Nonlin2)
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SystemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Unknown { kind: "system", name: s.to_string() })
    }
}

#[derive(Debug, Clone)]
pub enum CatalogSystem {
    Linear(LtvSystem),
    Nonlinear(NonlinearSystem),
}

impl CatalogSystem {
    pub fn n_x(&self) -> usize {
        match self {
            CatalogSystem::Linear(s) => s.n_x(),
            CatalogSystem::Nonlinear(s) => s.n_x,
        }
    }

    pub fn n_u(&self) -> usize {
        match self {
            CatalogSystem::Linear(s) => s.n_u(),
            CatalogSystem::Nonlinear(s) => s.n_u,
        }
    }

    pub fn as_linear(&self) -> Option<&LtvSystem> {
        match self {
            CatalogSystem::Linear(s) => Some(s),
            CatalogSystem::Nonlinear(_) => None,
        }
    }
}

/// Zero-order-hold discretization of `x' = A x + B u` via the exponential of
/// the augmented matrix `[[A, B], [0, 0]] dt`.
pub fn zoh_discretize(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let m = b.ncols();
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * dt));
    let e = aug.exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

fn spring_mass(horizon: usize) -> Result<LtvSystem> {
    let (m, k, c, dt) = SPRING_MASS;
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -k / m, -c / m]);
    let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0 / m]);
    let (ad, bd) = zoh_discretize(&a, &b, dt);
    LtvSystem::lti(ad, bd, DMatrix::identity(2, 2), horizon)
}

fn random_stable(horizon: usize, seed: u64) -> Result<LtvSystem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = loop {
        let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        if linalg::spectral_radius(&a) < 1.0 {
            break a;
        }
    };
    LtvSystem::lti(a, DMatrix::from_column_slice(2, 1, &[0.0, 1.0]), DMatrix::identity(2, 2), horizon)
}

/// First-order `x' = -x^3 + u`, Euler-discretized.
pub fn nonlin_1() -> NonlinearSystem {
    let dt = NONLINEAR_DT;
    NonlinearSystem {
        n_x: 1,
        n_u: 1,
        g: Arc::new(move |x: &DVector<f64>| x.map(|v| v - dt * v.powi(3))),
        h: Arc::new(move |_| DMatrix::from_element(1, 1, dt)),
        dg: Arc::new(move |x: &DVector<f64>| DMatrix::from_element(1, 1, 1.0 - 3.0 * dt * x[0] * x[0])),
        dh: NonlinearSystem::constant_input_gain(1, 1),
        c: DMatrix::identity(1, 1),
        dt,
    }
}

/// Second-order `x1' = x2`, `x2' = -sin(x1) - x2 + u`, Euler-discretized.
pub fn nonlin_2() -> NonlinearSystem {
    let dt = NONLINEAR_DT;
    NonlinearSystem {
        n_x: 2,
        n_u: 1,
        g: Arc::new(move |x: &DVector<f64>| {
            DVector::from_vec(vec![x[0] + dt * x[1], x[1] + dt * (-x[0].sin() - x[1])])
        }),
        h: Arc::new(move |_| DMatrix::from_column_slice(2, 1, &[0.0, dt])),
        dg: Arc::new(move |x: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[1.0, dt, -dt * x[0].cos(), 1.0 - dt])),
        dh: NonlinearSystem::constant_input_gain(2, 1),
        c: DMatrix::identity(2, 2),
        dt,
    }
}

/// Builds a catalog system. `seed` is only used by `random-stable`.
pub fn make_system(name: &str, horizon: usize, seed: u64) -> Result<CatalogSystem> {
    let kind: SystemKind = name.parse()?;
    Ok(match kind {
        SystemKind::SpringMass => CatalogSystem::Linear(spring_mass(horizon)?),
        SystemKind::DoubleIntegrator => CatalogSystem::Linear(LtvSystem::lti(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
            horizon,
        )?),
        // First-order queue model of an email server.
        SystemKind::EmailServer => CatalogSystem::Linear(LtvSystem::lti(
            DMatrix::from_element(1, 1, 0.43),
            DMatrix::from_element(1, 1, 0.47),
            DMatrix::identity(1, 1),
            horizon,
        )?),
        // Second-order CPU/memory model of an HTTP server driven by one
        // configuration knob, input scaled to unit range.
        SystemKind::HttpServer => CatalogSystem::Linear(LtvSystem::lti(
            DMatrix::from_row_slice(2, 2, &[0.54, -0.11, -0.026, 0.63]),
            DMatrix::from_column_slice(2, 1, &[-0.85, -0.025]),
            DMatrix::identity(2, 2),
            horizon,
        )?),
        SystemKind::RandomStable => CatalogSystem::Linear(random_stable(horizon, seed)?),
        SystemKind::Nonlin1 => CatalogSystem::Nonlinear(nonlin_1()),
        SystemKind::Nonlin2 => CatalogSystem::Nonlinear(nonlin_2()),
    })
}
