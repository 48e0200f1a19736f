use adalie::bench::make_system;
use adalie::dynsys::simulate_open_loop;
use adalie::io::{load_measurements, parse_measurements, write_episode_csv, SystemConfig};
use adalie::noise::NoiseModel;
use adalie::Error;
use nalgebra::DVector;

#[test]
fn episode_csv_round_trips_exactly() {
    let sys = make_system("http-server", 25, 0).unwrap();
    let inputs: Vec<DVector<f64>> = (0..25).map(|t| DVector::from_element(1, (t as f64 * 0.37).cos() / 3.0)).collect();
    let ep = simulate_open_loop(sys.as_linear().unwrap(), &inputs, &NoiseModel::uniform(0.1, 5), &DVector::zeros(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ep.csv");
    write_episode_csv(&ep, &path).unwrap();
    let meas = load_measurements(&path).unwrap();
    assert_eq!(meas.outputs, ep.all_outputs());
    assert_eq!(meas.inputs.as_deref(), Some(&inputs[..]));
    let back = meas.to_episode(ep.x0_hat.clone(), 1);
    assert_eq!(back.outputs, ep.outputs);
    assert_eq!(back.initial_output, ep.initial_output);
}

#[test]
fn measurement_errors_name_the_line() {
    let err = parse_measurements("t,y0\n0,1.0\n1,2.0,3.0\n").unwrap_err();
    assert!(matches!(&err, Error::Parse(m) if m.contains("line 3")), "{err}");
    assert!(parse_measurements("t,y0\n").is_err());
}

#[test]
fn system_configs() {
    let builtin = SystemConfig::from_toml("builtin = \"double-integrator\"\n").unwrap();
    assert_eq!(builtin.build(12).unwrap().n_x(), 2);
    let explicit = SystemConfig::from_toml("a = [[0.5]]\nb = [[1.0]]\nc = [[2.0]]\nnoise_bound = 0.1\n").unwrap();
    let sys = explicit.build(4).unwrap();
    assert_eq!(sys.as_linear().unwrap().horizon(), 4);
    let x0 = explicit.initial_estimate(sys.as_linear().unwrap().c(0), &DVector::from_element(1, 3.0)).unwrap();
    assert!((x0[0] - 1.5).abs() < 1e-12);

    assert!(SystemConfig::from_toml("a = [[0.5]]\n").is_err());
    assert!(SystemConfig::from_toml("builtin = \"spring-mass\"\nsurprise = 1\n").is_err());
    assert!(SystemConfig::from_toml("a = [[0.5, 1.0], [1.0]]\nb = [[1.0]]\nc = [[1.0]]\n").unwrap().build(3).is_err());
}
