use nprg_flow::flow::{run_flow, FlowSettings, SpinodalTrigger, StopReason};
use nprg_flow::model::{
    bare_potential, reduce, DimensionlessParams, GridSpec, ModelParams, PotentialGrid,
};
use nprg_flow::observables::{effective_couplings, susceptibility};

fn final_curvature(lam: f64, eta: f64) -> (StopReason, f64) {
    let params = DimensionlessParams::new(lam, eta, 1e4).unwrap();
    let initial = bare_potential(lam, GridSpec::default()).unwrap();
    let out = run_flow(&params, &FlowSettings::default(), &initial).unwrap();
    (out.stop_reason, out.origin_curvature())
}

#[test]
fn weak_coupling_origin_becomes_stable() {
    let (reason, curvature) = final_curvature(1.0, 0.0);
    assert_eq!(reason, StopReason::Converged);
    assert!(curvature > 0.0);
}

#[test]
fn dissipation_suppresses_curvature() {
    for (lam, etas) in [(0.3, [0.0, 1.0, 2.0, 4.0]), (1.0, [0.0, 2.0, 10.0, 30.0])] {
        let curvatures: Vec<f64> = etas
            .iter()
            .map(|&eta| {
                let (reason, c) = final_curvature(lam, eta);
                assert_eq!(reason, StopReason::Converged, "lam {lam} eta {eta}");
                c
            })
            .collect();
        assert!(
            curvatures.windows(2).all(|w| w[1] < w[0]),
            "lam {lam}: {curvatures:?}"
        );
    }
}

#[test]
fn far_supercritical_flow_hits_spinodal() {
    let params = DimensionlessParams::new(1.0, 60.0, 1e4).unwrap();
    let initial = bare_potential(1.0, GridSpec::default()).unwrap();
    let out = run_flow(&params, &FlowSettings::default(), &initial).unwrap();
    assert_eq!(out.stop_reason, StopReason::Spinodal);
    assert!(out.spinodal_trigger.is_some());
    if out.spinodal_trigger == Some(SpinodalTrigger::LogArgument) {
        assert!(out.min_log_argument <= FlowSettings::default().spinodal_eps);
    }
    let obs = effective_couplings(&out, 9).unwrap();
    assert!(!obs.valid && obs.chi.is_none());
}

#[test]
fn harmonic_curvature_is_a_fixed_point() {
    for eta in [0.0, 1.0, 10.0] {
        let params = DimensionlessParams::new(1.0, eta, 1e4).unwrap();
        let initial = PotentialGrid::from_fn(GridSpec::default(), |q| 0.5 * q * q).unwrap();
        let out = run_flow(&params, &FlowSettings::default(), &initial).unwrap();
        assert_eq!(out.stop_reason, StopReason::Converged);
        assert!((out.origin_curvature() - 1.0).abs() < 1e-8, "eta {eta}");
    }
}

#[test]
fn fit_window_choice_is_immaterial() {
    let params = DimensionlessParams::new(1.0, 0.0, 1e4).unwrap();
    let initial = bare_potential(1.0, GridSpec::default()).unwrap();
    let out = run_flow(&params, &FlowSettings::default(), &initial).unwrap();
    let reference = effective_couplings(&out, 9).unwrap().omega_eff_sq;
    for window in [7, 13] {
        let w2 = effective_couplings(&out, window).unwrap().omega_eff_sq;
        assert!((w2 - reference).abs() / reference < 1e-4, "window {window}");
    }
}

#[test]
fn equal_dimensionless_parameters_give_scaled_susceptibility() {
    let a = ModelParams::default();
    let b = ModelParams {
        mass: 2.0,
        hbar: 0.5,
        omega0: 1.5,
        ..a
    };
    // choose b's physical couplings so that both reduce to the same dimensionless point
    let target = reduce(&a).unwrap();
    let b = target.expand(b.mass, b.hbar, b.omega0);
    let rb = reduce(&b).unwrap();
    assert!((rb.lam - target.lam).abs() < 1e-14);
    let initial = bare_potential(target.lam, GridSpec::default()).unwrap();
    let out = run_flow(&target, &FlowSettings::default(), &initial).unwrap();
    let obs = effective_couplings(&out, 9).unwrap();
    let ratio = susceptibility(&obs, &a).unwrap() / susceptibility(&obs, &b).unwrap();
    let expected = (b.mass * b.omega0 * b.omega0) / (a.mass * a.omega0 * a.omega0);
    assert!((ratio - expected).abs() / expected < 1e-10);
}
