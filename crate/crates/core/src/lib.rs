//! Input estimation for known linear time-varying (or linearized) systems
//! from noisy output measurements.
//!
//! The main estimator picks, for every time step, a convex combination of
//! inverted measurements that minimizes a high-probability bound on the
//! squared error. An unbiased minimum-variance recursive filter is provided
//! as a baseline, together with a benchmark harness and a
//! learning-from-observations pipeline on a pendulum.

pub mod bench;
pub mod dynsys;
pub mod error;
pub mod estimator;
pub mod io;
pub mod lfo;
pub mod linalg;
pub mod noise;
pub mod seed;
pub mod umvie;

pub use error::{Error, Result};
