use adalie::bench::report::write_tables;
use adalie::bench::{run_grid, BenchConfig, EstimatorKind, SignalKind, SignalSpec};

fn small_config() -> BenchConfig {
    BenchConfig {
        systems: vec!["email-server".into(), "nonlin-1".into()],
        signals: vec![SignalSpec::new(SignalKind::Step), SignalSpec::new(SignalKind::Sine)],
        episodes: 3,
        cv_episodes: 2,
        horizon: 30,
        ratio_grid: vec![0.01, 1.0, 100.0],
        ..BenchConfig::default()
    }
}

fn run_with_threads(config: &BenchConfig, threads: usize) -> adalie::bench::ResultTable {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| run_grid(config).unwrap())
}

#[test]
fn grid_is_independent_of_thread_count() {
    let config = small_config();
    let one = run_with_threads(&config, 1);
    let many = run_with_threads(&config, 3);
    assert_eq!(one, many);
    assert_eq!(one.cells().len(), 4);
    for (system, signal) in one.cells() {
        for kind in [EstimatorKind::AdaLie, EstimatorKind::UmvIe] {
            let row = one.row(&system, &signal, kind).unwrap();
            assert_eq!(row.episode_rms.len(), 3, "{system}/{signal}/{kind}: {:?}", row.failures);
            assert!(row.mean.is_finite());
        }
        let ratio = one.row(&system, &signal, EstimatorKind::AdaLie).unwrap().ratio.unwrap();
        assert!(config.ratio_grid.contains(&ratio));
    }
}

#[test]
fn seed_changes_results() {
    let a = run_grid(&small_config()).unwrap();
    let b = run_grid(&BenchConfig { seed: 99, ..small_config() }).unwrap();
    assert_ne!(a.rows, b.rows);
}

#[test]
fn tables_are_written_with_one_row_per_episode() {
    let table = run_grid(&small_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = write_tables(&table, dir.path()).unwrap();
    assert_eq!(written.len(), 3);
    let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    // Header plus cells x estimators x episodes.
    assert_eq!(results.lines().count(), 1 + 4 * 2 * 3);
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4);
}

#[test]
fn unknown_system_is_rejected_before_running() {
    let config = BenchConfig { systems: vec!["email-server".into(), "no-such-system".into()], ..small_config() };
    assert!(matches!(run_grid(&config), Err(adalie::Error::Unknown { .. })));
}
