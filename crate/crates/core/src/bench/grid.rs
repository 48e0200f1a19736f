use std::fmt;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::catalog::{make_system, CatalogSystem, SystemKind};
use super::metrics::{mean, rms_error, std_dev};
use super::signals::{as_inputs, make_signal, SignalKind, SignalSpec};
use crate::dynsys::{simulate_open_loop, Episode, LtvSystem};
use crate::error::{Error, Result};
use crate::estimator::{DistanceMetric, EstimatorConfig, PreparedEpisode, SolverOptions};
use crate::noise::{NoiseFamily, NoiseModel};
use crate::seed;
use crate::umvie;

/// Weights above this count as nonzero in sparsity reports.
pub const SPARSITY_THRESHOLD: f64 = 1e-6;

pub fn default_ratio_grid() -> Vec<f64> {
    (0..13).map(|k| 10f64.powf(-3.0 + 0.5 * k as f64)).collect()
}

fn default_systems() -> Vec<String> {
    SystemKind::ALL.iter().map(|k| k.name().to_string()).collect()
}
fn default_signals() -> Vec<SignalSpec> {
    SignalKind::ALL.iter().map(|&k| SignalSpec::new(k)).collect()
}
fn default_episodes() -> usize {
    20
}
fn default_horizon() -> usize {
    100
}
fn default_noise_bound() -> f64 {
    0.2
}
fn default_perturbation() -> f64 {
    0.05
}
fn default_cv_episodes() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "default_systems")]
    pub systems: Vec<String>,
    #[serde(default = "default_signals")]
    pub signals: Vec<SignalSpec>,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_noise_bound")]
    pub noise_bound: f64,
    #[serde(default)]
    pub noise_family: NoiseFamily,
    /// Standard deviation of the Gaussian perturbation of the estimator's
    /// state transition matrices.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    #[serde(default = "default_ratio_grid")]
    pub ratio_grid: Vec<f64>,
    #[serde(default = "default_cv_episodes")]
    pub cv_episodes: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub metric: DistanceMetric,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            systems: default_systems(),
            signals: default_signals(),
            episodes: default_episodes(),
            horizon: default_horizon(),
            noise_bound: default_noise_bound(),
            noise_family: NoiseFamily::Uniform,
            perturbation: default_perturbation(),
            ratio_grid: default_ratio_grid(),
            cv_episodes: default_cv_episodes(),
            seed: 0,
            metric: DistanceMetric::default(),
            solver: SolverOptions::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::InvalidArgument("episodes must be >= 1".into()));
        }
        if self.horizon < 2 {
            return Err(Error::InvalidArgument("horizon must be >= 2".into()));
        }
        if self.ratio_grid.is_empty() || self.ratio_grid.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::InvalidArgument("ratio grid must be non-empty and nonnegative".into()));
        }
        if self.cv_episodes == 0 {
            return Err(Error::InvalidArgument("cv_episodes must be >= 1".into()));
        }
        if !(self.noise_bound >= 0.0) || !(self.perturbation >= 0.0) {
            return Err(Error::InvalidArgument("noise bound and perturbation must be >= 0".into()));
        }
        for s in &self.systems {
            s.parse::<SystemKind>()?;
        }
        Ok(())
    }

    /// Configuration restricted to one cell.
    pub fn single(&self, system: &str, signal: SignalSpec) -> Self {
        Self { systems: vec![system.to_string()], signals: vec![signal], ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    AdaLie,
    UmvIe,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::AdaLie => "adal-ie",
            EstimatorKind::UmvIe => "umv-ie",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRow {
    pub system: String,
    pub signal: String,
    pub estimator: EstimatorKind,
    /// Per-episode RMS for the episodes that completed, with their indices.
    pub episode_rms: Vec<(usize, f64)>,
    pub mean: f64,
    pub std: f64,
    pub ratio: Option<f64>,
    pub nonconverged: usize,
    pub failures: Vec<String>,
}

impl EstimatorRow {
    pub fn rms_values(&self) -> Vec<f64> {
        self.episode_rms.iter().map(|&(_, r)| r).collect()
    }
}

/// Per-step traces of one cell, for plots and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTrace {
    pub system: String,
    pub signal: String,
    pub truth: Vec<f64>,
    pub adalie_mean: Vec<f64>,
    pub adalie_std: Vec<f64>,
    pub umv_mean: Vec<f64>,
    pub umv_std: Vec<f64>,
    /// Mean over episodes of `|u_hat_t - u_t|` for the adaptive estimator.
    pub adalie_abs_error: Vec<f64>,
    /// Nonzero weight counts per target time in the first episode.
    pub nonzero_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<EstimatorRow>,
    pub traces: Vec<CellTrace>,
    pub noise_bound: f64,
}

impl ResultTable {
    pub fn row(&self, system: &str, signal: &str, estimator: EstimatorKind) -> Option<&EstimatorRow> {
        self.rows.iter().find(|r| r.system == system && r.signal == signal && r.estimator == estimator)
    }

    /// `(system, signal)` pairs in table order.
    pub fn cells(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        for r in &self.rows {
            if !out.iter().any(|(s, g)| s == &r.system && g == &r.signal) {
                out.push((r.system.clone(), r.signal.clone()));
            }
        }
        out
    }

    /// Estimator with the lower mean RMS in a cell; `None` if a row is missing
    /// or has no completed episodes.
    pub fn winner(&self, system: &str, signal: &str) -> Option<EstimatorKind> {
        let a = self.row(system, signal, EstimatorKind::AdaLie)?;
        let u = self.row(system, signal, EstimatorKind::UmvIe)?;
        match (a.mean.is_finite(), u.mean.is_finite()) {
            (true, true) => Some(if a.mean <= u.mean { EstimatorKind::AdaLie } else { EstimatorKind::UmvIe }),
            (true, false) => Some(EstimatorKind::AdaLie),
            (false, true) => Some(EstimatorKind::UmvIe),
            (false, false) => None,
        }
    }
}

/// An episode together with the model the estimators are given.
#[derive(Debug, Clone)]
pub struct BenchEpisode {
    pub episode: Episode,
    pub model: LtvSystem,
    pub noise: NoiseModel,
}

/// Simulates one episode of a catalog system and builds the estimators'
/// model: linear systems are perturbed copies of the truth, nonlinear ones
/// are linearized along the measured trajectory and then perturbed.
pub fn make_episode(
    system: &CatalogSystem,
    inputs: &[DVector<f64>],
    noise_bound: f64,
    family: NoiseFamily,
    perturbation: f64,
    episode_seed: u64,
) -> Result<BenchEpisode> {
    let noise = NoiseModel::new(noise_bound, family, seed::derive(episode_seed, &["noise"]))?;
    let horizon = inputs.len();
    let x0 = DVector::zeros(system.n_x());
    let (episode, nominal) = match system {
        CatalogSystem::Linear(s) => {
            let ep = simulate_open_loop(s, inputs, &noise, &x0)?;
            (ep, s.truncated(horizon)?)
        }
        CatalogSystem::Nonlinear(nl) => {
            let ep = nl.simulate(&mut |t: usize, _: &DVector<f64>| inputs[t].clone(), &noise, &x0, horizon)?;
            let lin = nl.linearize(&ep.all_outputs())?;
            (ep, lin)
        }
    };
    let model = nominal.perturb(perturbation, seed::derive(episode_seed, &["perturb"]))?;
    Ok(BenchEpisode { episode, model, noise })
}

/// Cross-validation outcome for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub ratio: f64,
    /// Mean validation RMS per grid point (NaN where every episode failed).
    pub grid_rms: Vec<f64>,
    /// Whether the chosen ratio is the first or last grid point.
    pub at_endpoint: bool,
}

fn cell_inputs(system: &CatalogSystem, signal: &SignalSpec, horizon: usize) -> Result<Vec<DVector<f64>>> {
    Ok(as_inputs(&make_signal(signal, horizon)?, system.n_u()))
}

fn cell_seed(config: &BenchConfig, system: &str, signal: &SignalSpec, phase: &str, index: usize) -> u64 {
    seed::derive_indexed(config.seed, &[system, signal.name(), phase], index)
}

fn system_seed(config: &BenchConfig, system: &str) -> u64 {
    seed::derive(config.seed, &[system, "system"])
}

/// Picks the ratio minimizing mean RMS over calibration episodes disjoint
/// (by seed) from the evaluation episodes. Ties go to the largest ratio.
pub fn cross_validate_ratio(system_name: &str, signal: &SignalSpec, config: &BenchConfig) -> Result<CvResult> {
    config.validate()?;
    let system = make_system(system_name, config.horizon, system_seed(config, system_name))?;
    let inputs = cell_inputs(&system, signal, config.horizon)?;
    if config.ratio_grid.len() == 1 {
        return Ok(CvResult { ratio: config.ratio_grid[0], grid_rms: vec![f64::NAN], at_endpoint: false });
    }
    let per_episode: Vec<Option<Vec<f64>>> = (0..config.cv_episodes)
        .into_par_iter()
        .map(|c| {
            let seed = cell_seed(config, system_name, signal, "cv", c);
            let run = || -> Result<Vec<f64>> {
                let be = make_episode(&system, &inputs, config.noise_bound, config.noise_family, config.perturbation, seed)?;
                let prep = PreparedEpisode::new(&be.model, &be.episode)?;
                let biases = prep.bias_vectors(&config.metric)?;
                config
                    .ratio_grid
                    .iter()
                    .map(|&ratio| {
                        let cfg = EstimatorConfig { ratio, metric: config.metric, solver: config.solver, variance_constant: None };
                        let seq = prep.estimate_with_bias(&biases, &cfg)?;
                        rms_error(&seq.estimates, &be.episode.true_inputs)
                    })
                    .collect()
            };
            run().ok()
        })
        .collect();
    let grid_rms: Vec<f64> = (0..config.ratio_grid.len())
        .map(|k| {
            let vals: Vec<f64> = per_episode.iter().flatten().map(|v| v[k]).collect();
            mean(&vals)
        })
        .collect();
    let best = grid_rms.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "cross-validation failed for every calibration episode of {system_name}/{}",
            signal.name()
        )));
    }
    let slack = best * 1e-12 + 1e-15;
    let mut chosen = 0;
    for (k, &v) in grid_rms.iter().enumerate() {
        let r = config.ratio_grid[k];
        if v.is_finite() && v <= best + slack && (r >= config.ratio_grid[chosen] || !grid_rms[chosen].is_finite() || grid_rms[chosen] > best + slack) {
            chosen = k;
        }
    }
    let ratio = config.ratio_grid[chosen];
    let lo = config.ratio_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = config.ratio_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(CvResult { ratio, grid_rms, at_endpoint: ratio == lo || ratio == hi })
}

/// Ratio for measurements with unknown inputs: the grid point with the
/// lowest mean RMS over simulated episodes of every benchmark signal at the
/// given noise bound, without model perturbation. Ties go to the largest
/// ratio.
pub fn calibrate_ratio(
    system: &CatalogSystem,
    horizon: usize,
    noise_bound: f64,
    ratio_grid: &[f64],
    seed: u64,
) -> Result<f64> {
    if ratio_grid.is_empty() || ratio_grid.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
        return Err(Error::InvalidArgument("ratio grid must be non-empty and nonnegative".into()));
    }
    let per_signal: Vec<Vec<f64>> = SignalKind::ALL
        .par_iter()
        .map(|&kind| -> Result<Vec<f64>> {
            let inputs = cell_inputs(system, &SignalSpec::new(kind), horizon)?;
            let s = seed::derive(seed, &["calibrate", kind.name()]);
            let be = make_episode(system, &inputs, noise_bound, NoiseFamily::Uniform, 0.0, s)?;
            let prep = PreparedEpisode::new(&be.model, &be.episode)?;
            let biases = prep.bias_vectors(&DistanceMetric::default())?;
            ratio_grid
                .iter()
                .map(|&ratio| {
                    let seq = prep.estimate_with_bias(&biases, &EstimatorConfig::with_ratio(ratio))?;
                    rms_error(&seq.estimates, &be.episode.true_inputs)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut best = (f64::INFINITY, 0.0);
    for (k, &ratio) in ratio_grid.iter().enumerate() {
        let m = mean(&per_signal.iter().map(|v| v[k]).collect::<Vec<_>>());
        if m < best.0 - 1e-12 * best.0.abs() || (m <= best.0 + 1e-12 * best.0.abs() && ratio > best.1) {
            best = (m, ratio);
        }
    }
    Ok(best.1)
}

struct EpisodeOutcome {
    adalie: std::result::Result<(f64, Vec<f64>, usize, Vec<usize>), String>,
    umv: std::result::Result<(f64, Vec<f64>), String>,
}

fn run_episode(
    system: &CatalogSystem,
    inputs: &[DVector<f64>],
    config: &BenchConfig,
    ratio: f64,
    seed: u64,
) -> EpisodeOutcome {
    let be = match make_episode(system, inputs, config.noise_bound, config.noise_family, config.perturbation, seed) {
        Ok(be) => be,
        Err(e) => {
            let msg = e.to_string();
            return EpisodeOutcome { adalie: Err(msg.clone()), umv: Err(msg) };
        }
    };
    let truth = &be.episode.true_inputs;
    let adalie = (|| -> Result<_> {
        let cfg = EstimatorConfig { ratio, metric: config.metric, solver: config.solver, variance_constant: None };
        let seq = PreparedEpisode::new(&be.model, &be.episode)?.estimate(&cfg)?;
        let rms = rms_error(&seq.estimates, truth)?;
        let nnz = seq.weights.iter().map(|w| w.count_above(SPARSITY_THRESHOLD)).collect();
        Ok((rms, seq.estimates.iter().map(|e| e[0]).collect(), seq.nonconverged(), nnz))
    })()
    .map_err(|e| e.to_string());
    let umv = (|| -> Result<_> {
        let run = umvie::umv_estimate(&be.model, &be.episode, &be.noise)?;
        Ok((rms_error(&run.estimates, truth)?, run.estimates.iter().map(|e| e[0]).collect()))
    })()
    .map_err(|e| e.to_string());
    EpisodeOutcome { adalie, umv }
}

fn per_step_stats(series: &[&Vec<f64>], horizon: usize) -> (Vec<f64>, Vec<f64>) {
    let mut means = vec![f64::NAN; horizon];
    let mut stds = vec![f64::NAN; horizon];
    if series.is_empty() {
        return (means, stds);
    }
    for t in 0..horizon {
        let vals: Vec<f64> = series.iter().map(|s| s[t]).collect();
        means[t] = mean(&vals);
        stds[t] = std_dev(&vals);
    }
    (means, stds)
}

/// Runs one `(system, signal)` cell: cross-validation, then both estimators
/// on the evaluation episodes.
pub fn run_cell(system_name: &str, signal: &SignalSpec, config: &BenchConfig) -> (Vec<EstimatorRow>, Option<CellTrace>) {
    let empty_row = |estimator, failure: String| EstimatorRow {
        system: system_name.to_string(),
        signal: signal.name().to_string(),
        estimator,
        episode_rms: Vec::new(),
        mean: f64::NAN,
        std: f64::NAN,
        ratio: None,
        nonconverged: 0,
        failures: vec![failure],
    };
    let setup = (|| -> Result<_> {
        let system = make_system(system_name, config.horizon, system_seed(config, system_name))?;
        let inputs = cell_inputs(&system, signal, config.horizon)?;
        let cv = cross_validate_ratio(system_name, signal, config)?;
        Ok((system, inputs, cv))
    })();
    let (system, inputs, cv) = match setup {
        Ok(v) => v,
        Err(e) => {
            let msg = e.to_string();
            return (vec![empty_row(EstimatorKind::AdaLie, msg.clone()), empty_row(EstimatorKind::UmvIe, msg)], None);
        }
    };
    let outcomes: Vec<EpisodeOutcome> = (0..config.episodes)
        .into_par_iter()
        .map(|e| run_episode(&system, &inputs, config, cv.ratio, cell_seed(config, system_name, signal, "eval", e)))
        .collect();

    let mut adalie = empty_row(EstimatorKind::AdaLie, String::new());
    adalie.failures.clear();
    adalie.ratio = Some(cv.ratio);
    let mut umv = empty_row(EstimatorKind::UmvIe, String::new());
    umv.failures.clear();
    let mut adalie_series = Vec::new();
    let mut umv_series = Vec::new();
    let mut nonzero_counts = Vec::new();
    for (e, o) in outcomes.iter().enumerate() {
        match &o.adalie {
            Ok((rms, est, nonconv, nnz)) => {
                adalie.episode_rms.push((e, *rms));
                adalie.nonconverged += nonconv;
                adalie_series.push(est);
                if nonzero_counts.is_empty() {
                    nonzero_counts = nnz.clone();
                }
            }
            Err(msg) => adalie.failures.push(format!("episode {e}: {msg}")),
        }
        match &o.umv {
            Ok((rms, est)) => {
                umv.episode_rms.push((e, *rms));
                umv_series.push(est);
            }
            Err(msg) => umv.failures.push(format!("episode {e}: {msg}")),
        }
    }
    for row in [&mut adalie, &mut umv] {
        let vals = row.rms_values();
        row.mean = mean(&vals);
        row.std = if vals.is_empty() { f64::NAN } else { std_dev(&vals) };
    }
    let horizon = config.horizon;
    let truth: Vec<f64> = inputs.iter().map(|u| u[0]).collect();
    let (adalie_mean, adalie_std) = per_step_stats(&adalie_series, horizon);
    let (umv_mean, umv_std) = per_step_stats(&umv_series, horizon);
    let adalie_abs_error = (0..horizon)
        .map(|t| mean(&adalie_series.iter().map(|s| (s[t] - truth[t]).abs()).collect::<Vec<_>>()))
        .collect();
    let trace = CellTrace {
        system: system_name.to_string(),
        signal: signal.name().to_string(),
        truth,
        adalie_mean,
        adalie_std,
        umv_mean,
        umv_std,
        adalie_abs_error,
        nonzero_counts,
    };
    (vec![adalie, umv], Some(trace))
}

/// Runs every `(system, signal)` cell of the configuration. Failures are
/// recorded per cell; the grid always completes.
pub fn run_grid(config: &BenchConfig) -> Result<ResultTable> {
    config.validate()?;
    let cells: Vec<(String, SignalSpec)> = config
        .systems
        .iter()
        .flat_map(|s| config.signals.iter().map(move |g| (s.clone(), *g)))
        .collect();
    let results: Vec<(Vec<EstimatorRow>, Option<CellTrace>)> =
        cells.par_iter().map(|(s, g)| run_cell(s, g, config)).collect();
    let mut table = ResultTable { noise_bound: config.noise_bound, ..ResultTable::default() };
    for (rows, trace) in results {
        table.rows.extend(rows);
        table.traces.extend(trace);
    }
    Ok(table)
}

/// Runs one cell at each noise bound.
pub fn noise_sweep(system: &str, signal: &SignalSpec, bounds: &[f64], config: &BenchConfig) -> Result<Vec<ResultTable>> {
    if bounds.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::InvalidArgument("noise bounds must be positive".into()));
    }
    bounds
        .iter()
        .map(|&b| run_grid(&BenchConfig { noise_bound: b, ..config.single(system, *signal) }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(system: &str, kind: SignalKind) -> BenchConfig {
        BenchConfig {
            episodes: 2,
            horizon: 30,
            cv_episodes: 2,
            ratio_grid: vec![0.01, 1.0, 100.0],
            ..BenchConfig::default().single(system, SignalSpec::new(kind))
        }
    }

    #[test]
    fn single_cell_has_two_rows() {
        let cfg = BenchConfig { episodes: 1, ..small("spring-mass", SignalKind::Sine) };
        let t = run_grid(&cfg).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.traces.len(), 1);
        assert!(t.rows.iter().all(|r| r.mean >= 0.0));
    }

    #[test]
    fn noiseless_constant_signal_is_recovered() {
        for system in ["spring-mass", "email-server", "double-integrator"] {
            let cfg = BenchConfig { noise_bound: 0.0, perturbation: 0.0, ..small(system, SignalKind::Step) };
            let t = run_grid(&cfg).unwrap();
            for r in &t.rows {
                assert!(r.mean <= 1e-3, "{system} {}: {}", r.estimator, r.mean);
            }
        }
    }

    #[test]
    fn one_point_grid_is_returned() {
        let cfg = BenchConfig { ratio_grid: vec![0.7], ..small("spring-mass", SignalKind::Sine) };
        assert_eq!(cross_validate_ratio("spring-mass", &SignalSpec::new(SignalKind::Sine), &cfg).unwrap().ratio, 0.7);
    }

    #[test]
    fn constant_signal_ties_prefer_largest_ratio() {
        // Without noise a constant input is recovered exactly for every ratio.
        let cfg = BenchConfig { noise_bound: 0.0, perturbation: 0.0, ..small("email-server", SignalKind::Step) };
        let cv = cross_validate_ratio("email-server", &SignalSpec::new(SignalKind::Step), &cfg).unwrap();
        assert_eq!(cv.ratio, 100.0);
    }

    #[test]
    fn grid_is_deterministic() {
        let cfg = small("nonlin-2", SignalKind::Triangle);
        assert_eq!(run_grid(&cfg).unwrap(), run_grid(&cfg).unwrap());
    }

    #[test]
    fn sweep_shape() {
        let cfg = small("spring-mass", SignalKind::Sine);
        let s = noise_sweep("spring-mass", &SignalSpec::new(SignalKind::Sine), &[0.01, 1.0], &cfg).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].noise_bound, 0.01);
        assert!(noise_sweep("spring-mass", &SignalSpec::new(SignalKind::Sine), &[0.0], &cfg).is_err());
    }
}
