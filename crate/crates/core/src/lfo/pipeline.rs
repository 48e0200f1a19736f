use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pendulum::{
    closed_loop_eigenvalues, is_upright, pendulum_rollout, random_start, spectral_radius, Controller, LinearPolicy,
    PendulumParams,
};
use crate::dynsys::Episode;
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, PreparedEpisode};
use crate::linalg::{self, RANK_TOL};
use crate::noise::{NoiseFamily, NoiseModel};
use crate::seed;
use crate::umvie;

/// Source of the clone targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSource {
    AdalIe,
    UmvIe,
    /// The applied inputs themselves; an upper baseline.
    Oracle,
}

impl TargetSource {
    pub const ALL: [TargetSource; 3] = [TargetSource::AdalIe, TargetSource::UmvIe, TargetSource::Oracle];

    pub fn name(&self) -> &'static str {
        match self {
            TargetSource::AdalIe => "adal-ie",
            TargetSource::UmvIe => "umv-ie",
            TargetSource::Oracle => "oracle",
        }
    }
}

impl fmt::Display for TargetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TargetSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TargetSource::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Unknown { kind: "estimator", name: s.to_string() })
    }
}

fn default_sources() -> Vec<TargetSource> {
    vec![TargetSource::AdalIe, TargetSource::UmvIe]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LfoConfig {
    pub demos: usize,
    /// Length of each expert demonstration, seconds.
    pub demo_duration: f64,
    /// Length of each evaluation rollout, seconds.
    pub eval_duration: f64,
    /// Bound on the scalar process noise added to the controller output.
    pub process_noise: f64,
    /// Bound on the 2-norm of the measurement noise on `(phi, omega)`.
    pub measurement_noise: f64,
    pub noise_family: NoiseFamily,
    /// Estimation window length in steps.
    pub chunk: usize,
    /// Lipschitz-to-noise ratio for the adaptive estimator.
    pub ratio: f64,
    #[serde(default = "default_sources")]
    pub estimators: Vec<TargetSource>,
    pub seed: u64,
    pub params: PendulumParams,
}

impl Default for LfoConfig {
    fn default() -> Self {
        Self {
            demos: 100,
            demo_duration: 20.0,
            eval_duration: 100.0,
            process_noise: 5.0,
            measurement_noise: 0.05,
            noise_family: NoiseFamily::Uniform,
            chunk: 10,
            ratio: 1.0,
            estimators: default_sources(),
            seed: 0,
            params: PendulumParams::default(),
        }
    }
}

impl LfoConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.demo_duration > 0.0) || !(self.eval_duration > 0.0) {
            return Err(Error::InvalidArgument("durations must be positive".into()));
        }
        if !(self.process_noise >= 0.0) || !(self.measurement_noise >= 0.0) {
            return Err(Error::InvalidArgument("noise bounds must be >= 0".into()));
        }
        if self.chunk < 2 {
            return Err(Error::InvalidArgument("chunk must be >= 2 steps".into()));
        }
        if !(self.ratio >= 0.0) || !self.ratio.is_finite() {
            return Err(Error::InvalidArgument("ratio must be finite and >= 0".into()));
        }
        Ok(())
    }

    fn steps(&self, seconds: f64) -> usize {
        (seconds / self.params.dt).round().max(1.0) as usize
    }

    fn noises(&self, seed: u64) -> Result<(NoiseModel, NoiseModel)> {
        Ok((
            NoiseModel::new(self.process_noise, self.noise_family, seed::derive(seed, &["process"]))?,
            NoiseModel::new(self.measurement_noise, self.noise_family, seed::derive(seed, &["measurement"]))?,
        ))
    }
}

/// Least-squares fit of `a ~ k_phi * phi + k_omega * omega`.
pub fn behavioral_clone(observations: &[(f64, f64)], targets: &[f64]) -> Result<LinearPolicy> {
    if observations.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} observations for {} targets",
            observations.len(),
            targets.len()
        )));
    }
    if observations.len() < 2 {
        return Err(Error::InvalidArgument("behavioral cloning needs at least two samples".into()));
    }
    let x = DMatrix::from_fn(observations.len(), 2, |r, c| if c == 0 { observations[r].0 } else { observations[r].1 });
    let y = DVector::from_column_slice(targets);
    if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite cloning data".into()));
    }
    if linalg::rank(&x, RANK_TOL) < 2 {
        return Err(Error::RankDeficientRegressor);
    }
    let k = x.svd(true, true).solve(&y, 0.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(LinearPolicy { k_phi: k[0], k_omega: k[1] })
}

/// Undoes the angle wrap in a measured sequence so consecutive angles differ
/// by less than `pi`.
fn unwrap_angles(outputs: &mut [DVector<f64>]) {
    let mut offset = 0.0;
    for k in 1..outputs.len() {
        let prev = outputs[k - 1][0];
        let raw = outputs[k][0] + offset;
        let jump = raw - prev;
        if jump > PI {
            offset -= 2.0 * PI;
        } else if jump < -PI {
            offset += 2.0 * PI;
        }
        outputs[k][0] += offset;
    }
}

/// Splits a demonstration into windows of at most `chunk` steps, each with its
/// own initial estimate `x_hat_0 = y_start`.
fn windows(demo: &Episode, chunk: usize) -> Vec<Episode> {
    let mut outputs = demo.all_outputs();
    unwrap_angles(&mut outputs);
    let n = demo.horizon();
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let y0 = outputs[start].clone();
        out.push(Episode {
            x0_hat: y0.clone(),
            x0_true: demo.states[start].clone(),
            initial_output: y0,
            outputs: outputs[start + 1..=end].to_vec(),
            true_inputs: demo.true_inputs[start..end].to_vec(),
            states: demo.states[start..=end].to_vec(),
        });
        start = end;
    }
    out
}

/// Estimates the applied controller outputs of a demonstration.
pub fn estimate_demo_inputs(demo: &Episode, source: TargetSource, config: &LfoConfig) -> Result<Vec<f64>> {
    if source == TargetSource::Oracle {
        return Ok(demo.true_inputs.iter().map(|u| u[0]).collect());
    }
    let model = config.params.model();
    let mut targets = Vec::with_capacity(demo.horizon());
    for w in windows(demo, config.chunk) {
        let lin = model.linearize(&w.all_outputs())?;
        let est = match source {
            TargetSource::AdalIe => {
                let cfg = EstimatorConfig::with_ratio(config.ratio);
                PreparedEpisode::new(&lin, &w)?.estimate(&cfg)?.estimates
            }
            TargetSource::UmvIe => {
                let vy = NoiseModel::new(config.measurement_noise, config.noise_family, 0)?.component_variance(2);
                let vp = NoiseModel::new(config.process_noise, config.noise_family, 0)?.component_variance(1);
                let b = lin.b(0).clone();
                let floor = 1e-12;
                let p0 = DMatrix::identity(2, 2) * vy.max(floor);
                let qn = &b * b.transpose() * vp + DMatrix::identity(2, 2) * floor;
                let rn = DMatrix::identity(2, 2) * vy.max(floor);
                umvie::umv_run(&lin, &w, p0, qn, rn)?.estimates
            }
            TargetSource::Oracle => unreachable!(),
        };
        targets.extend(est.iter().map(|u| u[0]));
    }
    Ok(targets)
}

/// Outcome for one demonstration and target source.
#[derive(Debug, Clone, PartialEq)]
pub struct LfoRow {
    pub source: TargetSource,
    pub demo: usize,
    pub policy: Option<LinearPolicy>,
    pub success: bool,
    pub max_eig: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LfoSummary {
    pub source: TargetSource,
    pub demos: usize,
    pub successes: usize,
    pub trials: usize,
    /// Gains averaged over the successfully cloned policies.
    pub mean_policy: Option<LinearPolicy>,
    pub mean_policy_max_eig: f64,
}

impl LfoSummary {
    pub fn success_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }

    pub fn mean_policy_stable(&self) -> bool {
        self.mean_policy_max_eig < 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LfoResult {
    pub rows: Vec<LfoRow>,
    pub summaries: Vec<LfoSummary>,
    /// Successes of the expert itself on the evaluation rollouts.
    pub expert_successes: usize,
    pub trials: usize,
}

impl LfoResult {
    pub fn summary(&self, source: TargetSource) -> Option<&LfoSummary> {
        self.summaries.iter().find(|s| s.source == source)
    }
}

/// Runs a policy (or the expert) from a random start for the evaluation
/// duration and applies the stabilization predicate.
pub fn evaluate(controller: Controller, config: &LfoConfig, eval_seed: u64) -> Result<bool> {
    let params = config.params.perturbed(seed::derive(eval_seed, &["params"]));
    let (process, measurement) = config.noises(seed::derive(eval_seed, &["noise"]))?;
    let x0 = random_start(seed::derive(eval_seed, &["start"]));
    let ep = pendulum_rollout(&params, controller, &process, &measurement, x0, config.steps(config.eval_duration))?;
    let last = ep.states.last().expect("rollout has a state");
    Ok(is_upright(last[0], last[1]))
}

/// Simulates demonstration `index`: the expert on a perturbed pendulum from a
/// random start, observed with noise.
pub fn demonstration(config: &LfoConfig, index: usize) -> Result<Episode> {
    let s = seed::derive_indexed(config.seed, &["lfo", "demo"], index);
    let params = config.params.perturbed(seed::derive(s, &["params"]));
    let (process, measurement) = config.noises(seed::derive(s, &["noise"]))?;
    let x0 = random_start(seed::derive(s, &["start"]));
    pendulum_rollout(&params, Controller::Expert, &process, &measurement, x0, config.steps(config.demo_duration))
}

fn clone_from_demo(demo: &Episode, source: TargetSource, config: &LfoConfig) -> Result<LinearPolicy> {
    let targets = estimate_demo_inputs(demo, source, config)?;
    let obs: Vec<(f64, f64)> = (0..demo.horizon()).map(|t| (demo.output(t)[0], demo.output(t)[1])).collect();
    behavioral_clone(&obs, &targets)
}

/// Learning-from-observations pipeline: one cloned policy per demonstration
/// and target source, each evaluated once.
pub fn run_lfo(config: &LfoConfig) -> Result<LfoResult> {
    config.validate()?;
    let per_demo: Vec<(Vec<LfoRow>, bool)> = (0..config.demos)
        .into_par_iter()
        .map(|i| {
            let eval_seed = seed::derive_indexed(config.seed, &["lfo", "eval"], i);
            let expert_ok = evaluate(Controller::Expert, config, eval_seed).unwrap_or(false);
            let demo = demonstration(config, i);
            let rows = config
                .estimators
                .iter()
                .map(|&source| {
                    let outcome = demo.as_ref().map_err(|e| e.to_string()).and_then(|d| {
                        let policy = clone_from_demo(d, source, config).map_err(|e| e.to_string())?;
                        let max_eig = spectral_radius(&closed_loop_eigenvalues(&policy, &config.params));
                        let success =
                            evaluate(Controller::Policy(policy), config, eval_seed).map_err(|e| e.to_string())?;
                        Ok((policy, max_eig, success))
                    });
                    match outcome {
                        Ok((policy, max_eig, success)) => {
                            LfoRow { source, demo: i, policy: Some(policy), success, max_eig, error: None }
                        }
                        Err(msg) => LfoRow {
                            source,
                            demo: i,
                            policy: None,
                            success: false,
                            max_eig: f64::NAN,
                            error: Some(msg),
                        },
                    }
                })
                .collect();
            (rows, expert_ok)
        })
        .collect();
    let expert_successes = per_demo.iter().filter(|(_, ok)| *ok).count();
    let rows: Vec<LfoRow> = per_demo.into_iter().flat_map(|(r, _)| r).collect();
    let summaries = config
        .estimators
        .iter()
        .map(|&source| {
            let mine: Vec<&LfoRow> = rows.iter().filter(|r| r.source == source).collect();
            let policies: Vec<LinearPolicy> = mine.iter().filter_map(|r| r.policy).collect();
            let mean_policy = (!policies.is_empty()).then(|| {
                let n = policies.len() as f64;
                LinearPolicy {
                    k_phi: policies.iter().map(|p| p.k_phi).sum::<f64>() / n,
                    k_omega: policies.iter().map(|p| p.k_omega).sum::<f64>() / n,
                }
            });
            let mean_policy_max_eig = mean_policy
                .map(|p| spectral_radius(&closed_loop_eigenvalues(&p, &config.params)))
                .unwrap_or(f64::NAN);
            LfoSummary {
                source,
                demos: config.demos,
                successes: mine.iter().filter(|r| r.success).count(),
                trials: mine.len(),
                mean_policy,
                mean_policy_max_eig,
            }
        })
        .collect();
    Ok(LfoResult { rows, summaries, expert_successes, trials: config.demos })
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Per-policy table: `estimator,demo,success,k_phi,k_omega,max_abs_eig,error`.
pub fn write_lfo_csv(result: &LfoResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["estimator", "demo", "success", "k_phi", "k_omega", "max_abs_eig", "error"])?;
    for r in &result.rows {
        w.write_record([
            r.source.name().to_string(),
            r.demo.to_string(),
            (r.success as u8).to_string(),
            r.policy.map(|p| fmt_f64(p.k_phi)).unwrap_or_default(),
            r.policy.map(|p| fmt_f64(p.k_omega)).unwrap_or_default(),
            fmt_f64(r.max_eig),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Aggregate table: `estimator,demos,successes,trials,mean_k_phi,mean_k_omega,mean_policy_max_abs_eig,mean_policy_stable`.
/// The expert appears as its own row.
pub fn write_lfo_summary_csv(result: &LfoResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "estimator",
        "demos",
        "successes",
        "trials",
        "mean_k_phi",
        "mean_k_omega",
        "mean_policy_max_abs_eig",
        "mean_policy_stable",
    ])?;
    w.write_record([
        "expert".to_string(),
        result.trials.to_string(),
        result.expert_successes.to_string(),
        result.trials.to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
    ])?;
    for s in &result.summaries {
        w.write_record([
            s.source.name().to_string(),
            s.demos.to_string(),
            s.successes.to_string(),
            s.trials.to_string(),
            s.mean_policy.map(|p| fmt_f64(p.k_phi)).unwrap_or_default(),
            s.mean_policy.map(|p| fmt_f64(p.k_omega)).unwrap_or_default(),
            fmt_f64(s.mean_policy_max_eig),
            if s.mean_policy.is_some() { (s.mean_policy_stable() as u8).to_string() } else { String::new() },
        ])?;
    }
    w.flush()?;
    Ok(())
}
