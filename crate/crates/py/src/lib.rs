//! Python bindings. Matrices are nested lists of rows; vectors are lists.

use adalie::bench::{self, BenchConfig, CatalogSystem, EstimatorKind};
use adalie::dynsys::{self, Episode};
use adalie::estimator::{self, EstimatorConfig, PreparedEpisode};
use adalie::lfo::{self, LfoConfig};
use adalie::noise::NoiseModel;
use adalie::umvie;
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: adalie::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map(|r| r.len()).unwrap_or(0);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("matrix must be a non-empty list of equal-length rows"));
    }
    Ok(DMatrix::from_fn(n, m, |r, c| rows[r][c]))
}

fn vectors(v: &[DVector<f64>]) -> Vec<Vec<f64>> {
    v.iter().map(|x| x.iter().copied().collect()).collect()
}

/// A linear time-varying system (constant matrices when built from lists).
#[pyclass(name = "LtvSystem", module = "adalie_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PySystem {
    inner: dynsys::LtvSystem,
}

#[pymethods]
impl PySystem {
    #[new]
    fn new(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, c: Vec<Vec<f64>>, horizon: usize) -> PyResult<Self> {
        let inner = dynsys::LtvSystem::lti(to_matrix(&a)?, to_matrix(&b)?, to_matrix(&c)?, horizon).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// A linear system from the benchmark catalog.
    #[staticmethod]
    #[pyo3(signature = (name, horizon, seed = 0))]
    fn builtin(name: &str, horizon: usize, seed: u64) -> PyResult<Self> {
        match bench::make_system(name, horizon, seed).map_err(py_err)? {
            CatalogSystem::Linear(inner) => Ok(Self { inner }),
            CatalogSystem::Nonlinear(_) => Err(PyValueError::new_err(format!("`{name}` is nonlinear"))),
        }
    }

    #[getter]
    fn n_x(&self) -> usize {
        self.inner.n_x()
    }
    #[getter]
    fn n_u(&self) -> usize {
        self.inner.n_u()
    }
    #[getter]
    fn n_y(&self) -> usize {
        self.inner.n_y()
    }
    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    /// Copy with Gaussian noise of standard deviation `sigma` on every entry
    /// of the state transition matrices.
    fn perturb(&self, sigma: f64, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: self.inner.perturb(sigma, seed).map_err(py_err)? })
    }

    fn state_transition(&self, t: usize, i: usize) -> PyResult<Vec<Vec<f64>>> {
        let m = self.inner.state_transition(t, i).map_err(py_err)?;
        Ok(m.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "LtvSystem(n_x={}, n_u={}, n_y={}, horizon={})",
            self.inner.n_x(),
            self.inner.n_u(),
            self.inner.n_y(),
            self.inner.horizon()
        )
    }
}

/// A simulated rollout: outputs `y_0 .. y_T` and the inputs that produced them.
#[pyclass(name = "Episode", module = "adalie_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyEpisode {
    inner: Episode,
}

#[pymethods]
impl PyEpisode {
    /// Measurements with unknown inputs; `x0_hat` defaults to zeros.
    #[new]
    #[pyo3(signature = (outputs, x0_hat, inputs = None))]
    fn new(outputs: Vec<Vec<f64>>, x0_hat: Vec<f64>, inputs: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        if outputs.len() < 2 {
            return Err(PyValueError::new_err("need outputs y_0 .. y_T with T >= 1"));
        }
        let ys: Vec<DVector<f64>> = outputs.iter().map(|y| DVector::from_column_slice(y)).collect();
        let horizon = ys.len() - 1;
        let us = match inputs {
            Some(u) if u.len() == horizon => u.iter().map(|v| DVector::from_column_slice(v)).collect(),
            Some(_) => return Err(PyValueError::new_err("inputs must have one entry per step")),
            None => vec![DVector::zeros(1); horizon],
        };
        let x0 = DVector::from_vec(x0_hat);
        Ok(Self {
            inner: Episode {
                x0_true: x0.clone(),
                x0_hat: x0,
                initial_output: ys[0].clone(),
                outputs: ys[1..].to_vec(),
                true_inputs: us,
                states: Vec::new(),
            },
        })
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }
    #[getter]
    fn outputs(&self) -> Vec<Vec<f64>> {
        vectors(&self.inner.all_outputs())
    }
    #[getter]
    fn inputs(&self) -> Vec<Vec<f64>> {
        vectors(&self.inner.true_inputs)
    }
    #[getter]
    fn states(&self) -> Vec<Vec<f64>> {
        vectors(&self.inner.states)
    }
}

/// Per-step estimates with bounds and weights.
#[pyclass(name = "Estimates", module = "adalie_py", frozen, get_all)]
pub struct PyEstimates {
    estimates: Vec<Vec<f64>>,
    bounds: Vec<f64>,
    weights: Vec<Vec<f64>>,
    converged: Vec<bool>,
}

/// Simulates `system` under `inputs` (one list per step) with uniform noise of
/// 2-norm at most `noise_bound`.
#[pyfunction]
#[pyo3(signature = (system, inputs, noise_bound = 0.0, seed = 0, x0 = None))]
fn simulate(
    system: &PySystem,
    inputs: Vec<Vec<f64>>,
    noise_bound: f64,
    seed: u64,
    x0: Option<Vec<f64>>,
) -> PyResult<PyEpisode> {
    let noise = NoiseModel::new(noise_bound, Default::default(), seed).map_err(py_err)?;
    let us: Vec<DVector<f64>> = inputs.iter().map(|u| DVector::from_column_slice(u)).collect();
    let x0 = x0.map(DVector::from_vec).unwrap_or_else(|| DVector::zeros(system.inner.n_x()));
    let inner = dynsys::simulate_open_loop(&system.inner, &us, &noise, &x0).map_err(py_err)?;
    Ok(PyEpisode { inner })
}

/// Adaptive estimates of every input of `episode`.
#[pyfunction]
#[pyo3(signature = (system, episode, ratio = 1.0))]
fn estimate(system: &PySystem, episode: &PyEpisode, ratio: f64) -> PyResult<PyEstimates> {
    let seq = PreparedEpisode::new(&system.inner, &episode.inner)
        .and_then(|p| p.estimate(&EstimatorConfig::with_ratio(ratio)))
        .map_err(py_err)?;
    Ok(PyEstimates {
        estimates: vectors(&seq.estimates),
        bounds: seq.bounds.clone(),
        weights: seq.weights.iter().map(|w| w.alpha.iter().copied().collect()).collect(),
        converged: seq.converged.clone(),
    })
}

/// Unbiased minimum-variance baseline estimates.
#[pyfunction]
fn umv_estimate(system: &PySystem, episode: &PyEpisode, noise_bound: f64) -> PyResult<Vec<Vec<f64>>> {
    let run = umvie::umv_estimate(&system.inner, &episode.inner, &NoiseModel::uniform(noise_bound, 0)).map_err(py_err)?;
    Ok(vectors(&run.estimates))
}

/// Euclidean projection onto the probability simplex.
#[pyfunction]
fn project_simplex(v: Vec<f64>) -> PyResult<Vec<f64>> {
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(PyValueError::new_err("vector must be non-empty and finite"));
    }
    let p = estimator::project_simplex(&DVector::from_vec(v)).map_err(py_err)?;
    Ok(p.iter().copied().collect())
}

/// `36 b^2 (1 + sqrt(log(1/beta)))^2`.
#[pyfunction]
fn noise_variance_constant(b: f64, beta: f64) -> PyResult<f64> {
    estimator::noise_variance_constant(b, beta).map_err(py_err)
}

#[pyfunction]
fn expert_control(phi: f64, omega: f64) -> f64 {
    lfo::expert_control(phi, omega)
}

/// Runs the benchmark grid described by a TOML document (empty for the
/// defaults). Returns `(system, signal, adal_ie_mean, umv_ie_mean, ratio)`
/// per cell.
#[pyfunction]
#[pyo3(signature = (config_toml = ""))]
fn run_bench(py: Python<'_>, config_toml: &str) -> PyResult<Vec<(String, String, f64, f64, Option<f64>)>> {
    let cfg: BenchConfig = toml::from_str(config_toml).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let table = py.detach(|| bench::run_grid(&cfg)).map_err(py_err)?;
    Ok(table
        .cells()
        .into_iter()
        .map(|(s, g)| {
            let a = table.row(&s, &g, EstimatorKind::AdaLie);
            let u = table.row(&s, &g, EstimatorKind::UmvIe);
            let (am, ratio) = a.map(|r| (r.mean, r.ratio)).unwrap_or((f64::NAN, None));
            let um = u.map(|r| r.mean).unwrap_or(f64::NAN);
            (s, g, am, um, ratio)
        })
        .collect())
}

/// Runs the pendulum learning-from-observations pipeline. Returns
/// `(targets, successes, trials, mean_policy_max_abs_eig)` per target source,
/// with the expert first.
#[pyfunction]
#[pyo3(signature = (config_toml = ""))]
fn run_lfo(py: Python<'_>, config_toml: &str) -> PyResult<Vec<(String, usize, usize, f64)>> {
    let cfg: LfoConfig = toml::from_str(config_toml).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let result = py.detach(|| lfo::run_lfo(&cfg)).map_err(py_err)?;
    let mut out = vec![("expert".to_string(), result.expert_successes, result.trials, f64::NAN)];
    out.extend(
        result.summaries.iter().map(|s| (s.source.name().to_string(), s.successes, s.trials, s.mean_policy_max_eig)),
    );
    Ok(out)
}

#[pymodule]
pub fn adalie_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PyEpisode>()?;
    m.add_class::<PyEstimates>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(umv_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(project_simplex, m)?)?;
    m.add_function(wrap_pyfunction!(noise_variance_constant, m)?)?;
    m.add_function(wrap_pyfunction!(expert_control, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    m.add_function(wrap_pyfunction!(run_lfo, m)?)?;
    Ok(())
}
