//! Adaptive linear input estimation: an anti-causal FIR estimator whose
//! weights minimize a bias-variance bound over the probability simplex.

mod estimate;
mod metric;
mod qp;
mod simplex;
mod solver;

pub use estimate::{
    error_bound, estimate_input, estimate_sequence, inverted_measurement, sparsity_profile, EstimateSequence,
    EstimatorConfig, PreparedEpisode,
};
pub use metric::DistanceMetric;
pub use qp::{build_bias_vector, build_q_matrix, noise_variance_constant, QpProblem};
pub use simplex::{project_simplex, WeightVector, ZERO_CLAMP};
pub use solver::{initial_index, max_curvature, solve_weights, Initialization, Solution, SolverMethod, SolverOptions};
