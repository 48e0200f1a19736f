//! CSV tables and SVG plots for benchmark results.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! results produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::grid::{CellTrace, EstimatorKind, ResultTable};
use crate::error::{Error, Result};

const ESTIMATORS: [EstimatorKind; 2] = [EstimatorKind::AdaLie, EstimatorKind::UmvIe];

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Long-format per-episode table: `system,signal,estimator,episode,rms`.
pub fn write_results_csv(table: &ResultTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["system", "signal", "estimator", "episode", "rms"])?;
    for row in &table.rows {
        for (e, rms) in &row.episode_rms {
            w.write_record([
                row.system.as_str(),
                row.signal.as_str(),
                row.estimator.name(),
                &e.to_string(),
                &fmt_f64(*rms),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One line per cell with both estimators' statistics and the winner.
pub fn write_summary_csv(table: &ResultTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "system",
        "signal",
        "noise_bound",
        "adal_ie_mean",
        "adal_ie_std",
        "umv_ie_mean",
        "umv_ie_std",
        "ratio",
        "winner",
        "adal_ie_failed_episodes",
        "umv_ie_failed_episodes",
        "adal_ie_nonconverged",
    ])?;
    for (system, signal) in table.cells() {
        let rows: Vec<_> = ESTIMATORS.iter().map(|&k| table.row(&system, &signal, k)).collect();
        let (Some(a), Some(u)) = (rows[0], rows[1]) else { continue };
        w.write_record([
            system.clone(),
            signal.clone(),
            fmt_f64(table.noise_bound),
            fmt_f64(a.mean),
            fmt_f64(a.std),
            fmt_f64(u.mean),
            fmt_f64(u.std),
            fmt_opt(a.ratio),
            table.winner(&system, &signal).map(|k| k.name().to_string()).unwrap_or_default(),
            a.failures.len().to_string(),
            u.failures.len().to_string(),
            a.nonconverged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-step nonzero weight counts for every cell: `system,signal,t,nnz`.
pub fn write_sparsity_csv(table: &ResultTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["system", "signal", "t", "nnz"])?;
    for tr in &table.traces {
        for (t, n) in tr.nonzero_counts.iter().enumerate() {
            w.write_record([tr.system.as_str(), tr.signal.as_str(), &t.to_string(), &n.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Noise sweep table: `system,signal,noise_bound,estimator,mean,std,episodes`.
pub fn write_sweep_csv(tables: &[ResultTable], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["system", "signal", "noise_bound", "estimator", "mean", "std", "episodes"])?;
    for table in tables {
        for row in &table.rows {
            w.write_record([
                row.system.clone(),
                row.signal.clone(),
                fmt_f64(table.noise_bound),
                row.estimator.name().to_string(),
                fmt_f64(row.mean),
                fmt_f64(row.std),
                row.episode_rms.len().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `results.csv`, `summary.csv` and `sparsity.csv` into `dir`.
pub fn write_tables(table: &ResultTable, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let paths = [dir.join("results.csv"), dir.join("summary.csv"), dir.join("sparsity.csv")];
    write_results_csv(table, &paths[0])?;
    write_summary_csv(table, &paths[1])?;
    write_sparsity_csv(table, &paths[2])?;
    Ok(paths.to_vec())
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

fn finite_range<'a>(series: impl IntoIterator<Item = &'a [f64]>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &v in s.iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-6);
    (lo - pad, hi + pad)
}

struct Series<'a> {
    label: &'a str,
    values: &'a [f64],
    color: RGBColor,
}

fn line_plot(path: &Path, title: &str, x_label: &str, series: &[Series<'_>]) -> Result<()> {
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0).max(2);
    let (lo, hi) = finite_range(series.iter().map(|s| s.values));
    let root = SVGBackend::new(path, (720, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(0f64..(n - 1) as f64, lo..hi)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc(x_label).draw().map_err(plot_err)?;
    for s in series {
        let color = s.color;
        let points = s.values.iter().enumerate().filter(|(_, v)| v.is_finite()).map(|(t, &v)| (t as f64, v));
        chart
            .draw_series(LineSeries::new(points, color.stroke_width(2)))
            .map_err(plot_err)?
            .label(s.label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

const TRUTH: RGBColor = RGBColor(0, 0, 0);
const ADALIE: RGBColor = RGBColor(31, 119, 180);
const UMV: RGBColor = RGBColor(214, 39, 40);

/// Estimate-versus-truth, absolute error and sparsity plots for one cell.
pub fn write_cell_plots(trace: &CellTrace, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let stem = format!("{}_{}", trace.system, trace.signal);
    let estimates = dir.join(format!("{stem}_estimates.svg"));
    line_plot(
        &estimates,
        &format!("{} / {}: mean estimates", trace.system, trace.signal),
        "t",
        &[
            Series { label: "true input", values: &trace.truth, color: TRUTH },
            Series { label: "adal-ie", values: &trace.adalie_mean, color: ADALIE },
            Series { label: "umv-ie", values: &trace.umv_mean, color: UMV },
        ],
    )?;
    let error = dir.join(format!("{stem}_error.svg"));
    line_plot(
        &error,
        &format!("{} / {}: adal-ie absolute error", trace.system, trace.signal),
        "t",
        &[Series { label: "mean |u_hat - u|", values: &trace.adalie_abs_error, color: ADALIE }],
    )?;
    let counts: Vec<f64> = trace.nonzero_counts.iter().map(|&c| c as f64).collect();
    let sparsity = dir.join(format!("{stem}_sparsity.svg"));
    line_plot(
        &sparsity,
        &format!("{} / {}: nonzero weights", trace.system, trace.signal),
        "t",
        &[Series { label: "nonzero coefficients", values: &counts, color: ADALIE }],
    )?;
    Ok(vec![estimates, error, sparsity])
}

/// Mean RMS of both estimators against the noise bound.
pub fn write_sweep_plot(tables: &[ResultTable], path: &Path) -> Result<()> {
    let mut per_kind: Vec<Vec<f64>> = vec![Vec::new(); ESTIMATORS.len()];
    for table in tables {
        let (system, signal) = table.cells().into_iter().next().unwrap_or_default();
        for (k, kind) in ESTIMATORS.iter().enumerate() {
            per_kind[k].push(table.row(&system, &signal, *kind).map(|r| r.mean).unwrap_or(f64::NAN));
        }
    }
    let bounds: Vec<String> = tables.iter().map(|t| fmt_f64(t.noise_bound)).collect();
    line_plot(
        path,
        &format!("mean RMS vs noise bound (index into [{}])", bounds.join(", ")),
        "noise bound index",
        &[
            Series { label: "adal-ie", values: &per_kind[0], color: ADALIE },
            Series { label: "umv-ie", values: &per_kind[1], color: UMV },
        ],
    )
}
