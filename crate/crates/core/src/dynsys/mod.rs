//! Linear time-varying systems, their transition matrices, simulation, and
//! linearization of control-affine nonlinear systems.

mod cache;
mod nonlinear;
mod simulate;
mod system;

pub use cache::{TransitionCache, FULL_TABLE_LIMIT};
pub use nonlinear::{MatrixMap, NonlinearSystem, TensorMap, VectorMap};
pub use simulate::{predicted_output, simulate, simulate_open_loop, Episode, InputFn, DIVERGENCE_LIMIT};
pub use system::{InputRecovery, LtvSystem};
