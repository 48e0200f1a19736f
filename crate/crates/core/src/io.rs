//! File formats: system definitions (TOML), measurement and episode CSVs, and
//! estimate CSVs.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bench::{make_system, CatalogSystem};
use crate::dynsys::{Episode, LtvSystem};
use crate::error::{Error, Result};
use crate::estimator::EstimateSequence;
use crate::linalg::{self, RANK_TOL};

/// Reads a text file, naming the path in the error.
pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn default_noise_bound() -> f64 {
    0.2
}

/// A system definition: either a catalog name or constant matrices given as
/// nested row arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default)]
    pub builtin: Option<String>,
    #[serde(default)]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub c: Option<Vec<Vec<f64>>>,
    /// Defaults to the number of inputs in the measurement file.
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Seed for randomly generated builtins.
    #[serde(default)]
    pub seed: u64,
    /// Noise bound assumed for the measurements; used by ratio calibration
    /// and the baseline filter.
    #[serde(default = "default_noise_bound")]
    pub noise_bound: f64,
    /// Initial state estimate; defaults to `C^+ y_0`.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n_rows = rows.len();
    let n_cols = rows.first().map(|r| r.len()).unwrap_or(0);
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::Parse(format!("matrix `{name}` is empty")));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != n_cols) {
        return Err(Error::Parse(format!("matrix `{name}`: row {bad} has {} entries, expected {n_cols}", rows[bad].len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Parse(format!("matrix `{name}` has non-finite entries")));
    }
    Ok(DMatrix::from_fn(n_rows, n_cols, |r, c| rows[r][c]))
}

impl SystemConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        match (&cfg.builtin, &cfg.a, &cfg.b, &cfg.c) {
            (Some(_), None, None, None) | (None, Some(_), Some(_), Some(_)) => Ok(cfg),
            _ => Err(Error::Parse("give either `builtin` or all of `a`, `b`, `c`".into())),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?)
    }

    pub fn build(&self, horizon: usize) -> Result<CatalogSystem> {
        let horizon = self.horizon.unwrap_or(horizon);
        if let Some(name) = &self.builtin {
            return make_system(name, horizon, self.seed);
        }
        let (a, b, c) = (self.a.as_ref().unwrap(), self.b.as_ref().unwrap(), self.c.as_ref().unwrap());
        Ok(CatalogSystem::Linear(LtvSystem::lti(matrix("a", a)?, matrix("b", b)?, matrix("c", c)?, horizon)?))
    }

    /// Initial state estimate for a measurement record.
    pub fn initial_estimate(&self, c: &DMatrix<f64>, y0: &DVector<f64>) -> Result<DVector<f64>> {
        if let Some(x0) = &self.x0 {
            if x0.len() != c.ncols() {
                return Err(Error::Dimension(format!("x0 has length {}, expected {}", x0.len(), c.ncols())));
            }
            return Ok(DVector::from_column_slice(x0));
        }
        match linalg::pinv_full_column_rank(c, RANK_TOL) {
            Some(p) => Ok(p * y0),
            None => Ok(DVector::zeros(c.ncols())),
        }
    }
}

/// Measured outputs `y_0 .. y_T`, optionally with known inputs for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub outputs: Vec<DVector<f64>>,
    pub inputs: Option<Vec<DVector<f64>>>,
}

impl Measurements {
    pub fn horizon(&self) -> usize {
        self.outputs.len().saturating_sub(1)
    }

    /// Episode for the estimators; true inputs are zero when unknown.
    pub fn to_episode(&self, x0_hat: DVector<f64>, n_u: usize) -> Episode {
        let horizon = self.horizon();
        Episode {
            x0_true: x0_hat.clone(),
            x0_hat,
            initial_output: self.outputs[0].clone(),
            outputs: self.outputs[1..].to_vec(),
            true_inputs: self.inputs.clone().unwrap_or_else(|| vec![DVector::zeros(n_u); horizon]),
            states: Vec::new(),
        }
    }
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("line {line}: {msg}"))
}

/// Parses a measurement CSV with header `t,y0,..[,u0,..]`. Rows must have
/// `t = 0, 1, .., T`; `u` cells may be empty on the last row.
pub fn parse_measurements(text: &str) -> Result<Measurements> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| parse_err(1, e))?.clone();
    if header.get(0) != Some("t") {
        return Err(parse_err(1, "first column must be `t`"));
    }
    let mut y_cols = Vec::new();
    let mut u_cols = Vec::new();
    for (k, name) in header.iter().enumerate().skip(1) {
        if name.starts_with('y') {
            y_cols.push(k);
        } else if name.starts_with('u') {
            u_cols.push(k);
        } else {
            return Err(parse_err(1, format!("unexpected column `{name}`")));
        }
    }
    if y_cols.is_empty() {
        return Err(parse_err(1, "no output columns"));
    }
    let mut outputs = Vec::new();
    let mut inputs: Vec<Option<DVector<f64>>> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| parse_err(line, e))?;
        if rec.len() != header.len() {
            return Err(parse_err(line, format!("{} fields, expected {}", rec.len(), header.len())));
        }
        let t: usize = rec[0].parse().map_err(|_| parse_err(line, format!("bad time index `{}`", &rec[0])))?;
        if t != row {
            return Err(parse_err(line, format!("expected t = {row}, found {t}")));
        }
        let num = |k: usize| -> Result<f64> {
            let v: f64 = rec[k].parse().map_err(|_| parse_err(line, format!("bad number `{}` in `{}`", &rec[k], &header[k])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(line, format!("non-finite value in `{}`", &header[k])))
            }
        };
        outputs.push(DVector::from_vec(y_cols.iter().map(|&k| num(k)).collect::<Result<_>>()?));
        if !u_cols.is_empty() {
            if u_cols.iter().all(|&k| rec[k].is_empty()) {
                inputs.push(None);
            } else {
                inputs.push(Some(DVector::from_vec(u_cols.iter().map(|&k| num(k)).collect::<Result<_>>()?)));
            }
        }
    }
    if outputs.len() < 2 {
        return Err(Error::Parse("need at least two measurement rows (t = 0 and t = 1)".into()));
    }
    let horizon = outputs.len() - 1;
    let inputs = if u_cols.is_empty() {
        None
    } else {
        let known: Vec<DVector<f64>> = inputs.iter().take(horizon).flatten().cloned().collect();
        if known.len() != horizon {
            return Err(Error::Parse("input columns must be filled for t = 0 .. T-1".into()));
        }
        Some(known)
    };
    Ok(Measurements { outputs, inputs })
}

pub fn load_measurements(path: &Path) -> Result<Measurements> {
    parse_measurements(&read_text(path)?).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Writes `t,y0..,u0..` with one row per output; the input cells of the last
/// row are empty.
pub fn write_episode_csv(episode: &Episode, path: &Path) -> Result<()> {
    let n_y = episode.initial_output.len();
    let n_u = episode.true_inputs.first().map(|u| u.len()).unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((0..n_y).map(|k| format!("y{k}")))
        .chain((0..n_u).map(|k| format!("u{k}")))
        .collect();
    w.write_record(&header)?;
    for t in 0..=episode.horizon() {
        let mut rec = vec![t.to_string()];
        rec.extend(episode.output(t).iter().map(|v| fmt_f64(*v)));
        match episode.true_inputs.get(t) {
            Some(u) => rec.extend(u.iter().map(|v| fmt_f64(*v))),
            None => rec.extend(std::iter::repeat_n(String::new(), n_u)),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Estimate table `t,u_hat0..,bound,converged,nnz`. Without weights (the
/// baseline filter) the last three columns are empty.
pub fn write_estimates_csv(
    estimates: &[DVector<f64>],
    sequence: Option<&EstimateSequence>,
    nnz_threshold: f64,
    path: &Path,
) -> Result<()> {
    let n_u = estimates.first().map(|u| u.len()).unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((0..n_u).map(|k| format!("u_hat{k}")))
        .chain(["bound", "converged", "nnz"].map(String::from))
        .collect();
    w.write_record(&header)?;
    for (t, u) in estimates.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(u.iter().map(|v| fmt_f64(*v)));
        match sequence {
            Some(s) => {
                rec.push(fmt_f64(s.bounds[t]));
                rec.push((s.converged[t] as u8).to_string());
                rec.push(s.weights[t].count_above(nnz_threshold).to_string());
            }
            None => rec.extend([String::new(), String::new(), String::new()]),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Dense weight matrix: row `t`, column `tau = 1..T`.
pub fn write_weights_csv(sequence: &EstimateSequence, path: &Path) -> Result<()> {
    let horizon = sequence.weights.first().map(|w| w.len()).unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=horizon).map(|k| format!("tau{k}"))).collect();
    w.write_record(&header)?;
    for (t, wv) in sequence.weights.iter().enumerate() {
        let rec: Vec<String> = std::iter::once(t.to_string()).chain(wv.alpha.iter().map(|v| fmt_f64(*v))).collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
