use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use adalie::bench::make_system;
use adalie::dynsys::simulate_open_loop;
use adalie::io::write_episode_csv;
use adalie::noise::NoiseModel;
use nalgebra::DVector;

fn adalie(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adalie")).args(args).output().expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn read_column(path: &Path, column: &str) -> Vec<f64> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let idx = reader.headers().unwrap().iter().position(|h| h == column).expect("column present");
    reader.records().map(|r| r.unwrap()[idx].parse().unwrap()).collect()
}

fn write_constant_measurements(dir: &Path, value: f64) -> PathBuf {
    let horizon = 40;
    let sys = make_system("spring-mass", horizon, 0).unwrap();
    let sys = sys.as_linear().unwrap();
    let inputs = vec![DVector::from_element(1, value); horizon];
    let ep = simulate_open_loop(sys, &inputs, &NoiseModel::zero(), &DVector::from_vec(vec![0.5, -0.2])).unwrap();
    let path = dir.join("constant.csv");
    write_episode_csv(&ep, &path).unwrap();
    path
}

#[test]
fn estimate_recovers_noiseless_constant_input() {
    let tmp = tempfile::tempdir().unwrap();
    let meas = write_constant_measurements(tmp.path(), 0.8);
    let out = tmp.path().join("out");
    for ratio in ["cv", "0.5"] {
        let o = adalie(&[
            "estimate",
            "--system",
            path_str(&configs().join("spring_mass.toml")),
            "--measurements",
            path_str(&meas),
            "--ratio",
            ratio,
            "--baseline",
            "--out",
            path_str(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for file in ["estimates.csv", "umv_estimates.csv"] {
            let u = read_column(&out.join(file), "u_hat0");
            assert_eq!(u.len(), 40);
            let worst = u.iter().map(|v| (v - 0.8).abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-6, "{file} with ratio {ratio}: error {worst}");
        }
    }
}

#[test]
fn rank_deficient_system_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let meas = write_constant_measurements(tmp.path(), 0.3);
    let system = tmp.path().join("deficient.toml");
    // The input never reaches the measured coordinate.
    std::fs::write(&system, "a = [[0.9, 0.0], [0.0, 0.8]]\nb = [[0.0], [1.0]]\nc = [[1.0, 0.0], [0.0, 0.0]]\n").unwrap();
    let o = adalie(&[
        "estimate",
        "--system",
        path_str(&system),
        "--measurements",
        path_str(&meas),
        "--ratio",
        "1",
        "--out",
        path_str(&tmp.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_file_exits_one_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let o = adalie(&[
        "estimate",
        "--system",
        path_str(&configs().join("spring_mass.toml")),
        "--measurements",
        "/nonexistent/measurements.csv",
        "--out",
        path_str(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/measurements.csv"));
}

#[test]
fn malformed_measurements_report_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let meas = tmp.path().join("bad.csv");
    std::fs::write(&meas, "t,y0,y1\n0,0.1,0.2\n1,0.3,oops\n").unwrap();
    let o = adalie(&[
        "estimate",
        "--system",
        path_str(&configs().join("spring_mass.toml")),
        "--measurements",
        path_str(&meas),
        "--out",
        path_str(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(adalie(&["bench"]).status.code(), Some(1));
    assert_eq!(adalie(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(adalie(&["--help"]).status.code(), Some(0));
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "episodes = 2\nepisdoes = 3\n").unwrap();
    let o = adalie(&["bench", "--config", path_str(&cfg), "--out", path_str(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("episdoes"));
}

#[test]
fn smoke_bench_is_fast_and_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let smoke = configs().join("smoke.toml");
    let mut results = Vec::new();
    for run in 0..2 {
        let out = tmp.path().join(format!("run{run}"));
        let start = Instant::now();
        let o = adalie(&["bench", "--config", path_str(&smoke), "--out", path_str(&out)]);
        assert!(start.elapsed().as_secs_f64() < 10.0);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert!(stdout.contains("spring-mass") && stdout.contains("wins"), "{stdout}");
        for f in ["results.csv", "summary.csv", "sparsity.csv"] {
            assert!(out.join(f).exists(), "{f}");
        }
        results.push(std::fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(results[0], results[1]);
}

#[test]
fn bench_plots_are_written_on_request() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = adalie(&["bench", "--config", path_str(&configs().join("smoke.toml")), "--plots", "--out", path_str(&out)]);
    assert!(o.status.success());
    for artifact in ["estimates", "error", "sparsity"] {
        assert!(out.join("plots").join(format!("spring-mass_step_{artifact}.svg")).exists(), "{artifact}");
    }
}

#[test]
fn lfo_with_zero_trials_is_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("lfo.toml");
    std::fs::write(&cfg, "demos = 0\n").unwrap();
    let out = tmp.path().join("out");
    let o = adalie(&["lfo", "--config", path_str(&cfg), "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv::Reader::from_path(out.join("lfo_results.csv")).unwrap().records().count();
    assert_eq!(rows, 0);
}

#[test]
fn seed_override_changes_outcomes_not_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("lfo.toml");
    std::fs::write(&cfg, "demos = 3\ndemo_duration = 5.0\neval_duration = 5.0\n").unwrap();
    let mut files = Vec::new();
    for seed in ["1", "2"] {
        let out = tmp.path().join(seed);
        let o = adalie(&["lfo", "--config", path_str(&cfg), "--seed", seed, "--out", path_str(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        files.push(std::fs::read_to_string(out.join("lfo_results.csv")).unwrap());
    }
    assert_eq!(files[0].lines().next(), files[1].lines().next());
    assert_ne!(files[0], files[1]);
}

#[test]
fn sweep_writes_one_block_per_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = adalie(&[
        "sweep",
        "--config",
        path_str(&configs().join("smoke.toml")),
        "--signal",
        "step",
        "--bounds",
        "0.05,0.5",
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let bounds = read_column(&out.join("sweep.csv"), "noise_bound");
    assert!(bounds.contains(&0.05) && bounds.contains(&0.5));
}
