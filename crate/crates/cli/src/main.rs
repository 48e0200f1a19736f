use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adalie::bench::{
    self, calibrate_ratio, default_ratio_grid, noise_sweep, report, rms_error, run_grid, BenchConfig, CatalogSystem,
    EstimatorKind, ResultTable, SignalKind, SignalSpec, SPARSITY_THRESHOLD,
};
use adalie::estimator::{EstimatorConfig, PreparedEpisode};
use adalie::io::{self, SystemConfig};
use adalie::lfo::{run_lfo, write_lfo_csv, write_lfo_summary_csv, LfoConfig};
use adalie::noise::NoiseModel;
use adalie::{umvie, Error, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};

#[derive(Debug, Parser)]
#[command(name = "adalie", version, about = "Input estimation for linear time-varying systems")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the inputs behind a measurement file.
    Estimate {
        /// System definition (TOML).
        #[arg(long)]
        system: PathBuf,
        /// Measurements CSV with columns t,y0,.. (optionally u0,.. for scoring).
        #[arg(long)]
        measurements: PathBuf,
        /// Lipschitz-to-noise ratio, or `cv` to calibrate it on simulated episodes.
        #[arg(long, default_value = "cv")]
        ratio: String,
        /// Also run the unbiased minimum-variance baseline.
        #[arg(long)]
        baseline: bool,
        /// Also write the dense weight matrix.
        #[arg(long)]
        weights: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the benchmark grid.
    Bench {
        /// Benchmark configuration (TOML); defaults to the full grid.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write SVG plots for every cell.
        #[arg(long)]
        plots: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one benchmark cell at several noise bounds.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "spring-mass")]
        system: String,
        #[arg(long, default_value = "ramp")]
        signal: String,
        /// Comma-separated noise bounds.
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,1")]
        bounds: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        plots: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learning from observations on the pendulum.
    Lfo {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_toml<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = io::read_text(p)?;
            toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))
        }
    }
}

fn estimate(
    system: &Path,
    measurements: &Path,
    ratio: &str,
    baseline: bool,
    weights: bool,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let cfg = SystemConfig::load(system)?;
    let meas = io::load_measurements(measurements)?;
    let horizon = meas.horizon();
    let catalog = cfg.build(horizon)?;
    let n_u = catalog.n_u();
    let model = match &catalog {
        CatalogSystem::Linear(s) => s.truncated(horizon.min(s.horizon()))?,
        CatalogSystem::Nonlinear(nl) => nl.linearize(&meas.outputs)?,
    };
    if model.n_y() != meas.outputs[0].len() {
        return Err(Error::Dimension(format!(
            "system has {} outputs, measurements have {}",
            model.n_y(),
            meas.outputs[0].len()
        )));
    }
    let x0 = cfg.initial_estimate(model.c(0), &meas.outputs[0])?;
    let episode = meas.to_episode(x0, n_u);
    let ratio = match ratio {
        "cv" => {
            let r = calibrate_ratio(&catalog, horizon, cfg.noise_bound, &default_ratio_grid(), seed)?;
            info!("calibrated ratio {r}");
            r
        }
        s => s.parse::<f64>().map_err(|_| Error::Parse(format!("ratio must be a number or `cv`, got `{s}`")))?,
    };
    let seq = PreparedEpisode::new(&model, &episode)?.estimate(&EstimatorConfig::with_ratio(ratio))?;
    fs::create_dir_all(out)?;
    io::write_estimates_csv(&seq.estimates, Some(&seq), SPARSITY_THRESHOLD, &out.join("estimates.csv"))?;
    if weights {
        io::write_weights_csv(&seq, &out.join("weights.csv"))?;
    }
    if seq.nonconverged() > 0 {
        warn!("{} time steps did not reach the solver tolerance", seq.nonconverged());
    }
    println!("ratio {ratio}");
    if let Some(truth) = &meas.inputs {
        println!("adal-ie rms {}", rms_error(&seq.estimates, truth)?);
    }
    if baseline {
        let noise = NoiseModel::uniform(cfg.noise_bound, 0);
        let run = umvie::umv_estimate(&model, &episode, &noise)?;
        io::write_estimates_csv(&run.estimates, None, SPARSITY_THRESHOLD, &out.join("umv_estimates.csv"))?;
        if let Some(truth) = &meas.inputs {
            println!("umv-ie rms {}", rms_error(&run.estimates, truth)?);
        }
    }
    Ok(())
}

fn print_summary(table: &ResultTable) {
    println!("{:<18} {:<16} {:>10} {:>10} {:>10}  winner", "system", "signal", "adal-ie", "umv-ie", "ratio");
    for (system, signal) in table.cells() {
        let a = table.row(&system, &signal, EstimatorKind::AdaLie);
        let u = table.row(&system, &signal, EstimatorKind::UmvIe);
        let mean = |r: Option<&bench::EstimatorRow>| r.map(|r| format!("{:.4}", r.mean)).unwrap_or_default();
        let ratio = a.and_then(|r| r.ratio).map(|r| format!("{r:.3e}")).unwrap_or_default();
        let winner = table.winner(&system, &signal).map(|k| k.name()).unwrap_or("-");
        println!("{system:<18} {signal:<16} {:>10} {:>10} {ratio:>10}  {winner}", mean(a), mean(u));
    }
    let wins = table
        .cells()
        .iter()
        .filter(|(s, g)| table.winner(s, g) == Some(EstimatorKind::AdaLie))
        .count();
    println!("adal-ie wins {wins} of {} cells", table.cells().len());
}

fn report_failures(table: &ResultTable) -> Result<()> {
    for row in &table.rows {
        for f in &row.failures {
            warn!("{}/{} {}: {f}", row.system, row.signal, row.estimator);
        }
    }
    if !table.rows.is_empty() && table.rows.iter().all(|r| r.episode_rms.is_empty()) {
        return Err(Error::InvalidArgument("every benchmark cell failed".into()));
    }
    Ok(())
}

fn bench_cmd(config: Option<&Path>, seed: Option<u64>, plots: bool, out: &Path) -> Result<()> {
    let mut cfg: BenchConfig = read_toml(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let table = run_grid(&cfg)?;
    fs::create_dir_all(out)?;
    report::write_tables(&table, out)?;
    if plots {
        for trace in &table.traces {
            report::write_cell_plots(trace, &out.join("plots"))?;
        }
    }
    print_summary(&table);
    report_failures(&table)
}

fn sweep_cmd(
    config: Option<&Path>,
    system: &str,
    signal: &str,
    bounds: &[f64],
    seed: Option<u64>,
    plots: bool,
    out: &Path,
) -> Result<()> {
    let mut cfg: BenchConfig = read_toml(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let spec = SignalSpec::new(signal.parse::<SignalKind>()?);
    let tables = noise_sweep(system, &spec, bounds, &cfg)?;
    fs::create_dir_all(out)?;
    report::write_sweep_csv(&tables, &out.join("sweep.csv"))?;
    if plots {
        fs::create_dir_all(out.join("plots"))?;
        report::write_sweep_plot(&tables, &out.join("plots").join(format!("{system}_{signal}_sweep.svg")))?;
    }
    println!("{:>10} {:>10} {:>10}", "bound", "adal-ie", "umv-ie");
    for t in &tables {
        let m = |k| t.row(system, signal, k).map(|r| r.mean).unwrap_or(f64::NAN);
        println!("{:>10} {:>10.4} {:>10.4}", t.noise_bound, m(EstimatorKind::AdaLie), m(EstimatorKind::UmvIe));
    }
    for t in &tables {
        report_failures(t)?;
    }
    Ok(())
}

fn lfo_cmd(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg: LfoConfig = read_toml(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let result = run_lfo(&cfg)?;
    fs::create_dir_all(out)?;
    write_lfo_csv(&result, &out.join("lfo_results.csv"))?;
    write_lfo_summary_csv(&result, &out.join("lfo_summary.csv"))?;
    println!("{:<10} {:>9} {:>7}  mean policy (k_phi, k_omega)  max|eig|", "targets", "successes", "trials");
    println!("{:<10} {:>9} {:>7}", "expert", result.expert_successes, result.trials);
    for s in &result.summaries {
        let pol = s.mean_policy.map(|p| format!("({:.3}, {:.3})", p.k_phi, p.k_omega)).unwrap_or_default();
        println!("{:<10} {:>9} {:>7}  {pol:<28} {:.4}", s.source.name(), s.successes, s.trials, s.mean_policy_max_eig);
    }
    for r in result.rows.iter().filter(|r| r.error.is_some()) {
        warn!("{} demo {}: {}", r.source, r.demo, r.error.as_deref().unwrap_or_default());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    match cli.command {
        Command::Estimate { system, measurements, ratio, baseline, weights, seed, out } => {
            estimate(&system, &measurements, &ratio, baseline, weights, seed.unwrap_or(0), &out)
        }
        Command::Bench { config, seed, plots, out } => bench_cmd(config.as_deref(), seed, plots, &out),
        Command::Sweep { config, system, signal, bounds, seed, plots, out } => {
            sweep_cmd(config.as_deref(), &system, &signal, &bounds, seed, plots, &out)
        }
        Command::Lfo { config, seed, out } => lfo_cmd(config.as_deref(), seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_domain() { 2 } else { 1 })
        }
    }
}
