//! Benchmark catalog and experiment runner comparing the adaptive estimator
//! with the unbiased minimum-variance filter.

mod catalog;
mod grid;
mod metrics;
pub mod report;
mod signals;

pub use catalog::{make_system, nonlin_1, nonlin_2, zoh_discretize, CatalogSystem, SystemKind, NONLINEAR_DT, SPRING_MASS};
pub use grid::{
    calibrate_ratio, cross_validate_ratio, default_ratio_grid, make_episode, noise_sweep, run_cell, run_grid, BenchConfig, BenchEpisode,
    CellTrace, CvResult, EstimatorKind, EstimatorRow, ResultTable, SPARSITY_THRESHOLD,
};
pub use metrics::{mean, median, rms_error, std_dev};
pub use signals::{as_inputs, make_signal, SignalKind, SignalSpec};
