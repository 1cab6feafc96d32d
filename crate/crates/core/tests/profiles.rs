use std::io::Write;

use proptest::prelude::*;

use socsmo::model::ModelParams;
use socsmo::profiles::{
    add_noise, add_noise_to_trace, constant_current, export_csv, ingest_csv, read_csv, synthetic_dynamic,
    write_csv, ColumnMap, CurrentProfile, Envelope, NoiseShape, NoiseSpec,
};
use socsmo::Error;

fn q() -> f64 {
    ModelParams::reference().q_all
}

#[test]
fn constant_current_levels() {
    assert!((constant_current(1.0, q(), 10.0, 1.0).unwrap().current[0] - 2.8941).abs() < 1e-12);
    assert!((constant_current(2.0, q(), 10.0, 1.0).unwrap().current[0] - 5.7882).abs() < 1e-12);
    assert!(constant_current(0.0, q(), 10.0, 1.0).is_err());
    assert!(constant_current(1.0, q(), 10.0, 0.0).is_err());
}

#[test]
fn dynamic_net_charge_in_band() {
    let p = synthetic_dynamic(1400.0, 1.0, 0, Envelope::default(), q()).unwrap();
    let frac = p.charge_held() / q();
    assert!(frac > 0.2 && frac < 0.8, "net discharged fraction {frac}");
    assert!(p.current.iter().all(|i| i.abs() <= 2.0 * q() / 3600.0 + 1e-12));
}

#[test]
fn dynamic_zero_envelope_is_rest() {
    let p = synthetic_dynamic(300.0, 1.0, 4, Envelope { lower: 0.0, upper: 0.0 }, q()).unwrap();
    assert!(p.current.iter().all(|&i| i == 0.0));
}

#[test]
fn minimal_csv() {
    let text = "t_s,current_a\n0,1.0\n1,1.5\n2,-0.5\n";
    let p = read_csv(text.as_bytes(), &ColumnMap::default(), "x").unwrap();
    assert_eq!(p.len(), 3);
    assert!(p.voltage.is_none());
    assert!(p.uniform);
}

#[test]
fn decreasing_time_reports_line() {
    let text = "t_s,current_a,voltage_v\n0,1,4.1\n1,1,4.0\n0.5,1,3.9\n";
    match read_csv(text.as_bytes(), &ColumnMap::default(), "x") {
        Err(Error::Ingest { line, .. }) => assert_eq!(line, 4),
        other => panic!("expected ingestion error, got {other:?}"),
    }
    let bad = "t_s,current_a\n0,1\n1,abc\n";
    assert!(matches!(
        read_csv(bad.as_bytes(), &ColumnMap::default(), "x"),
        Err(Error::Ingest { line: 3, .. })
    ));
}

#[test]
fn custom_columns_and_non_uniform_grid() {
    let text = "time,amps,volts\n0,1,4.1\n1,1,4.0\n3,1,3.9\n";
    let cols = ColumnMap {
        time: "time".into(),
        current: "amps".into(),
        voltage: "volts".into(),
    };
    let p = read_csv(text.as_bytes(), &cols, "x").unwrap();
    assert!(!p.uniform);
    assert_eq!(p.voltage.as_ref().unwrap()[2], 3.9);
}

#[test]
fn file_round_trip_uses_lf() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    let p = CurrentProfile::new(vec![0.0, 1.0, 2.0], vec![0.1, -0.2, 0.3], Some(vec![4.0, 3.9, 3.8]), "p.csv").unwrap();
    export_csv(&p, &path).unwrap();
    let raw = std::fs::read_to_string(&path).unwrap();
    assert!(raw.starts_with("t_s,current_a,voltage_v\n"));
    assert!(!raw.contains('\r'));
    assert_eq!(ingest_csv(&path, &ColumnMap::default()).unwrap(), p);

    let mut f = std::fs::File::create(dir.path().join("empty.csv")).unwrap();
    writeln!(f, "t_s,current_a").unwrap();
    assert!(ingest_csv(&dir.path().join("empty.csv"), &ColumnMap::default()).is_err());
}

#[test]
fn zero_sigma_is_identity() {
    let p = synthetic_dynamic(100.0, 1.0, 2, Envelope::default(), q()).unwrap();
    assert_eq!(add_noise(&p, &NoiseSpec::none()).unwrap(), p);
}

#[test]
fn noise_std_matches_sigma() {
    let zeros = vec![0.0; 100_000];
    for shape in [NoiseShape::Gaussian, NoiseShape::UniformMixture] {
        let n = add_noise_to_trace(&zeros, 0.005, 11, shape).unwrap();
        let mean = n.iter().sum::<f64>() / n.len() as f64;
        let var = n.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.len() - 1) as f64;
        assert!((var.sqrt() / 0.005 - 1.0).abs() < 0.02, "{shape:?}: std {}", var.sqrt());
    }
    assert!(add_noise_to_trace(&zeros, -1.0, 0, NoiseShape::Gaussian).is_err());
}

proptest! {
    #[test]
    fn generators_are_deterministic(seed in any::<u64>(), sigma in 0.0f64..0.01) {
        let a = synthetic_dynamic(200.0, 1.0, seed, Envelope::default(), q()).unwrap();
        let b = synthetic_dynamic(200.0, 1.0, seed, Envelope::default(), q()).unwrap();
        prop_assert_eq!(&a, &b);
        let spec = NoiseSpec { sigma_v: sigma, sigma_i: sigma, seed, shape: NoiseShape::Gaussian };
        prop_assert_eq!(add_noise(&a, &spec).unwrap(), add_noise(&b, &spec).unwrap());
    }

    #[test]
    fn constant_current_charge_is_exact(rate in 0.05f64..3.0, steps in 1usize..2000) {
        let p = constant_current(rate, q(), steps as f64, 1.0).unwrap();
        let i = p.current[0];
        prop_assert!((p.charge_trapezoid() - i * steps as f64).abs() <= 1e-9 * i * steps as f64);
        prop_assert!(p.t.windows(2).all(|w| (w[1] - w[0] - 1.0).abs() < 1e-9));
    }

    #[test]
    fn csv_round_trip(values in proptest::collection::vec((-10.0f64..10.0, 2.0f64..4.5), 1..50)) {
        let t: Vec<f64> = (0..values.len()).map(|k| k as f64 * 0.5).collect();
        let p = CurrentProfile::new(
            t,
            values.iter().map(|v| v.0).collect(),
            Some(values.iter().map(|v| v.1).collect()),
            "x",
        ).unwrap();
        let mut buf = Vec::new();
        write_csv(&p, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &ColumnMap::default(), "x").unwrap();
        prop_assert_eq!(back, p);
    }
}
