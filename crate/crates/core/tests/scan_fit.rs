use nprg_flow::flow::StopReason;
use nprg_flow::scan::{
    eta_sweep, fit_window_points, power_law_fit, synthetic_table, SweepSettings, WindowPolicy,
};

#[test]
fn zero_dissipation_single_point() {
    let table = eta_sweep(1.0, &[0.0], &SweepSettings::default()).unwrap();
    assert_eq!(table.records.len(), 1);
    let r = &table.records[0];
    assert_eq!(r.stop_reason, StopReason::Converged);
    assert!(r.chi.unwrap() > 0.0);
}

#[test]
fn sweep_is_ordered_and_censors_supercritical_points() {
    let etas = [20.0, 30.0, 37.0, 60.0];
    let settings = SweepSettings {
        jobs: 2,
        ..Default::default()
    };
    let table = eta_sweep(1.0, &etas, &settings).unwrap();
    let got: Vec<f64> = table.records.iter().map(|r| r.eta).collect();
    assert_eq!(got, etas);
    let chis: Vec<f64> = table.converged().map(|r| r.chi.unwrap()).collect();
    assert_eq!(chis.len(), 3);
    assert!(chis.windows(2).all(|w| w[1] > w[0]), "{chis:?}");
    let last = table.records.last().unwrap();
    assert_eq!(last.stop_reason, StopReason::Spinodal);
    assert!(last.chi.is_none());
    assert_eq!(table.censoring_bracket(), Some((37.0, 60.0)));

    // the serial run gives identical records
    let serial = eta_sweep(
        1.0,
        &etas,
        &SweepSettings {
            jobs: 1,
            ..settings
        },
    )
    .unwrap();
    assert_eq!(serial.records, table.records);
}

#[test]
fn synthetic_recovery_through_the_window_policy() {
    let etas: Vec<f64> = (0..20).map(|k| 7.0 - 6.9 * 0.75f64.powi(k)).collect();
    let table = synthetic_table(2.0, 7.0, 1.5, &etas).unwrap();
    let policy = WindowPolicy::default();
    let points = fit_window_points(&table, &policy);
    assert!(points.len() >= 6 && points.len() < 20);
    let fit = power_law_fit(&table, &policy).unwrap();
    assert!((fit.eta_c - 7.0).abs() / 7.0 < 1e-6);
    assert!((fit.gamma - 1.5).abs() / 1.5 < 1e-6);
    assert!((fit.amplitude - 2.0).abs() / 2.0 < 1e-6);
    assert!(fit.eta_c > fit.window.eta_max);
}
