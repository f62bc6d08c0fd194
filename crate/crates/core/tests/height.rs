use kpzlab::bridge_formulas::{gamma_expansion_smooth, gamma_white_closed};
use kpzlab::height::{
    clt_experiment, estimate_gamma, estimate_gamma_multilevel, height_paths, lil_diagnostic,
    stationary_start, RegimeScanConfig,
};
use kpzlab::noise::{CovarianceSpec, RngStream};
use kpzlab::she::{Solver, SolverParams, SpaceTimeNoise};
use kpzlab::stats::{ks_two_sample, variance, variance_stderr};
use kpzlab::Error;

#[test]
fn gamma_input_checks() {
    let zero = estimate_gamma(&SolverParams::white(0.0, 1.0, 16, 1.0 / 128.0, 8.0), 1, 4).unwrap();
    assert_eq!(zero.compensated_slope.value, 0.0);
    assert_eq!(zero.overlap.value, 0.0);
    let short = SolverParams::white(1.0, 1.0, 16, 1.0 / 128.0, 2.0);
    assert!(matches!(
        estimate_gamma(&short, 1, 4),
        Err(Error::InvalidParameter { .. })
    ));
    let ok = SolverParams::white(1.0, 1.0, 16, 1.0 / 128.0, 8.0);
    assert!(estimate_gamma(&ok, 1, 1).is_err());
    assert!(estimate_gamma_multilevel(&ok, 2, 2, 1, 4).is_err());
}

#[test]
fn gamma_estimators_agree_after_extrapolation() {
    let base = SolverParams::white(1.0, 1.0, 32, 1.0 / 256.0, 8.0);
    let ml = estimate_gamma_multilevel(&base, 3, 2, 5, 8).unwrap();
    let ex = ml.extrapolated;
    assert!(
        ex.compensated_slope.agrees_with(&ex.overlap, 3.0),
        "compensated {:?} vs overlap {:?}",
        ex.compensated_slope,
        ex.overlap
    );
    assert!(ex.slope.agrees_with(&ex.compensated_slope, 3.0));
    assert!((ex.compensated_slope.value - gamma_white_closed(1.0, 1.0)).abs() < 0.03);
    assert_eq!(
        ml.levels,
        vec![(32, 1.0 / 256.0), (64, 1.0 / 1024.0), (128, 1.0 / 4096.0)]
    );
}

#[test]
fn smooth_noise_gamma_matches_small_beta_expansion() {
    let spec = CovarianceSpec::with_unit_mass(1, 1.0, &[0.6, 0.3, 0.1]).unwrap();
    let beta = 0.5;
    let exp = gamma_expansion_smooth(1.0, 1, &spec, 3).unwrap();
    let predicted = exp.gamma2 * beta * beta + exp.gamma4 * beta.powi(4);
    let params = SolverParams::smooth(beta, spec, 32, 1e-3, 20.0);
    let est = estimate_gamma(&params, 9, 16).unwrap();
    let g = est.compensated_slope;
    assert!(
        (g.value - predicted).abs() <= 3.0 * g.stderr + 2.0 * beta.powi(6),
        "simulated {} ± {} vs expansion {predicted}",
        g.value,
        g.stderr
    );
}

#[test]
fn height_is_log_mass_plus_log_density() {
    let params = SolverParams::white(1.0, 1.0, 32, 1e-3, 2.0);
    let stream = RngStream::new(4, 0);
    let z0 = stationary_start(&params, stream.substream(0), false).unwrap();
    assert_eq!(z0.values[0], 1.0);
    let mut s = Solver::new(&params, &z0).unwrap();
    s.run_to_step(2000, &SpaceTimeNoise::new(stream.substream(1)))
        .unwrap();
    for i in [0, 7, 31] {
        assert!((s.log_z(i) - (s.log_mass() + s.rho()[i].ln())).abs() < 1e-10);
    }
}

#[test]
fn clt_input_checks() {
    let params = SolverParams::white(1.0, 1.0, 16, 1.0 / 128.0, 10.0);
    assert!(matches!(
        clt_experiment(&params, 10.0, 50, -0.5, 1.0, 1),
        Err(Error::Underpowered(_))
    ));
    assert!(clt_experiment(&params, 10.0, 200, -0.5, 0.0, 1).is_err());
    let flat = SolverParams::white(0.0, 1.0, 16, 1.0 / 128.0, 10.0);
    assert!(clt_experiment(&flat, 10.0, 200, 0.0, 1.0, 1).is_err());
}

#[test]
fn height_variance_grows_linearly() {
    let params = SolverParams::white(1.0, 1.0, 16, 4e-3, 50.0);
    let paths = height_paths(&params, &[25.0, 50.0], 600, 3, false).unwrap();
    let h25: Vec<f64> = paths.iter().map(|p| p[0]).collect();
    let h50: Vec<f64> = paths.iter().map(|p| p[1]).collect();
    let ratio = variance(&h50) / variance(&h25);
    assert!((1.6..=2.4).contains(&ratio), "variance ratio {ratio}");
    // σ² ≥ β²/L.
    let per_time = variance(&h50) / 50.0;
    let rel = variance_stderr(&h50) / variance(&h50);
    assert!(per_time >= 1.0 - 3.0 * rel, "Var/t = {per_time}");
}

#[test]
fn height_law_is_sign_symmetric() {
    let params = SolverParams::white(1.0, 1.0, 16, 4e-3, 20.0);
    let gamma = -0.55;
    let r = |flip: bool, seed: u64| -> Vec<f64> {
        height_paths(&params, &[20.0], 400, seed, flip)
            .unwrap()
            .iter()
            .map(|h| lil_diagnostic(&[20.0], h, gamma).unwrap().r[0])
            .collect()
    };
    let ks = ks_two_sample(&r(false, 11), &r(true, 12));
    assert!(ks.p_value > 0.01, "KS p = {}", ks.p_value);
}

#[test]
fn lil_running_extremes() {
    let times = [3.0, 5.0, 10.0, 20.0, 40.0];
    let h = [-1.0, -4.0, -5.5, -10.0, -23.0];
    let p = lil_diagnostic(&times, &h, -0.5).unwrap();
    assert!(p.running_max.windows(2).all(|w| w[1] >= w[0]));
    assert!(p.running_min.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(
        p.max_abs(),
        p.running_max
            .last()
            .unwrap()
            .max(-p.running_min.last().unwrap())
    );
    assert!(lil_diagnostic(&[2.0, 5.0], &[0.0, 0.0], -0.5).is_err());
    assert!(lil_diagnostic(&[5.0], &[0.0, 0.0], -0.5).is_err());
}

#[test]
fn regime_config_validation() {
    let ok = RegimeScanConfig {
        alpha: 0.5,
        lambda: 1.0,
        times: vec![4.0, 16.0],
    };
    assert!(ok.validate().is_ok());
    assert_eq!(ok.length_at(16.0), 4.0);
    assert!(RegimeScanConfig {
        alpha: 0.7,
        ..ok.clone()
    }
    .validate()
    .is_err());
    assert!(RegimeScanConfig {
        alpha: -0.1,
        ..ok.clone()
    }
    .validate()
    .is_err());
    assert!(RegimeScanConfig {
        times: vec![4.0],
        ..ok.clone()
    }
    .validate()
    .is_err());
    assert!(RegimeScanConfig { lambda: 0.0, ..ok }.validate().is_err());
}

#[test]
fn smooth_stationary_start_is_a_density() {
    let spec = CovarianceSpec::with_unit_mass(1, 2.0, &[0.4, 0.2]).unwrap();
    let params = SolverParams::smooth(1.0, spec, 32, 1.0 / 256.0, 4.0);
    let z0 = stationary_start(&params, RngStream::new(6, 0), false).unwrap();
    assert!((z0.integral() - 1.0).abs() < 1e-12);
    assert!(z0.values.iter().all(|v| *v > 0.0));
}
