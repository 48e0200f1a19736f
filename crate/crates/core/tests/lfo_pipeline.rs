use adalie::lfo::{
    closed_loop_eigenvalues, evaluate, run_lfo, spectral_radius, Controller, LfoConfig, LinearPolicy, PendulumParams,
    TargetSource,
};

fn quick_config() -> LfoConfig {
    LfoConfig {
        demos: 6,
        demo_duration: 5.0,
        eval_duration: 20.0,
        estimators: vec![TargetSource::AdalIe, TargetSource::UmvIe, TargetSource::Oracle],
        ..LfoConfig::default()
    }
}

#[test]
fn expert_stabilizes_most_starts() {
    let config = LfoConfig { eval_duration: 30.0, ..LfoConfig::default() };
    let ok = (0..20).filter(|&s| evaluate(Controller::Expert, &config, s).unwrap()).count();
    assert!(ok >= 18, "{ok}/20");
    assert!(!(0..5).all(|s| evaluate(Controller::Zero, &config, s).unwrap()));
}

#[test]
fn stabilizing_gains_have_spectral_radius_below_one() {
    let params = PendulumParams::default();
    let good = LinearPolicy { k_phi: 30.0, k_omega: 8.0 };
    let bad = LinearPolicy { k_phi: 0.0, k_omega: 0.0 };
    assert!(spectral_radius(&closed_loop_eigenvalues(&good, &params)) < 1.0);
    assert!(spectral_radius(&closed_loop_eigenvalues(&bad, &params)) > 1.0);
}

#[test]
fn pipeline_is_deterministic_and_complete() {
    let config = quick_config();
    let a = run_lfo(&config).unwrap();
    let b = run_lfo(&config).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 6 * 3);
    assert_eq!(a.trials, 6);
    for source in [TargetSource::AdalIe, TargetSource::UmvIe, TargetSource::Oracle] {
        let s = a.summary(source).unwrap();
        assert_eq!(s.trials, 6);
        assert!(s.successes <= 6);
    }
    let oracle = a.summary(TargetSource::Oracle).unwrap();
    assert!(oracle.mean_policy_stable());
}
