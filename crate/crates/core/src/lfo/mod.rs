//! Learning from observations on an inverted pendulum: expert
//! demonstrations, input estimation from noisy measurements, behavioral
//! cloning of a linear policy, and stabilization checks.

mod pendulum;
mod pipeline;

pub use pendulum::{
    closed_loop_eigenvalues, expert_control, is_upright, pendulum_rollout, random_start, spectral_radius, wrap_angle,
    Controller, LinearPolicy, PendulumParams,
};
pub use pipeline::{
    behavioral_clone, demonstration, estimate_demo_inputs, evaluate, run_lfo, write_lfo_csv, write_lfo_summary_csv,
    LfoConfig, LfoResult, LfoRow, LfoSummary, TargetSource,
};
