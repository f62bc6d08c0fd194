use kpzlab::bridge_formulas::{
    bridge_exp_integrals, corrector_chi, corrector_grad, default_bridge_grid, ey_minus2_closed,
    gamma_expansion_smooth, gamma_white_bridge_mc, gamma_white_closed, sigma2_corrector_mc,
    sigma2_decay_fit, sigma2_nested_mc, sigma2_white_mc, winding_diffusivity_mc, yor_density,
    yor_moments, CorrectorCache, QuadratureSpec,
};
use kpzlab::noise::{sample_stationary_density, CovarianceSpec, RngStream};
use kpzlab::projective::DensityField;
use kpzlab::stats::{mean, variance, Estimate};
use kpzlab::{Error, LatticeField};
use proptest::prelude::*;

/// `E ∫_0^1 e^{λW} = ∫_0^1 e^{λ²x(1−x)/2} dx` by composite Simpson.
fn ey_exact(lambda: f64) -> f64 {
    let m = 2000;
    let h = 1.0 / m as f64;
    let f = |x: f64| (0.5 * lambda * lambda * x * (1.0 - x)).exp();
    let inner: f64 = (1..m)
        .map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h))
        .sum();
    h / 3.0 * (f(0.0) + f(1.0) + inner)
}

#[test]
fn yor_moments_against_independent_values() {
    let spec = QuadratureSpec::default();
    for lambda in [0.5, 1.0, 2.0] {
        let m = yor_moments(lambda, &[0.0, 1.0, -2.0], &spec).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-8, "normalization {}", m[0]);
        assert!(
            (m[1] - ey_exact(lambda)).abs() < 1e-8,
            "mean {} vs {}",
            m[1],
            ey_exact(lambda)
        );
        assert!((m[2] - ey_minus2_closed(lambda)).abs() < 1e-8);
    }
    assert!(
        yor_density(1.0, -1.0, &spec).is_err() || yor_density(1.0, -1.0, &spec).unwrap() == 0.0
    );
}

#[test]
fn negative_moment_matches_bridge_samples() {
    let lambda = 1.0;
    let y = bridge_exp_integrals(lambda, 1.0, 100_000, 512, 3).unwrap();
    let inv2: Vec<f64> = y.iter().map(|v| v.powi(-2)).collect();
    let se = (variance(&inv2) / inv2.len() as f64).sqrt();
    assert!((mean(&inv2) - ey_minus2_closed(lambda)).abs() <= 3.0 * se);
}

#[test]
fn gamma_bridge_mc_matches_closed_form() {
    let est = gamma_white_bridge_mc(1.0, 1.0, 200_000, default_bridge_grid(1.0), 1).unwrap();
    let closed = gamma_white_closed(1.0, 1.0);
    assert!(
        (est.value - closed).abs() <= 3.0 * est.stderr,
        "{} ± {}",
        est.value,
        est.stderr
    );
    let small = gamma_white_bridge_mc(1e-3, 2.0, 2000, 256, 1).unwrap();
    assert!((small.value / 1e-6 + 0.25).abs() < 1e-3);
    assert_eq!(
        gamma_white_bridge_mc(0.0, 2.0, 1000, 64, 1).unwrap().value,
        0.0
    );
    assert!(gamma_white_bridge_mc(-1.0, 1.0, 1000, 64, 1).is_err());
}

#[test]
fn gamma_bridge_scaling_in_length() {
    // γ_L(β) = γ_1(β√L) / L².
    let (beta, length) = (0.8, 3.0);
    let a = gamma_white_bridge_mc(beta, length, 100_000, 1024, 4).unwrap();
    let b = gamma_white_bridge_mc(beta * length.sqrt(), 1.0, 100_000, 1024, 5)
        .unwrap()
        .scaled(1.0 / (length * length));
    assert!(a.agrees_with(&b, 3.0), "{a:?} vs {b:?}");
}

#[test]
fn mc_stderr_shrinks_as_inverse_root() {
    let a = gamma_white_bridge_mc(1.0, 1.0, 20_000, 256, 6).unwrap();
    let b = gamma_white_bridge_mc(1.0, 1.0, 80_000, 256, 7).unwrap();
    let ratio = a.stderr / b.stderr;
    assert!((1.7..=2.3).contains(&ratio), "stderr ratio {ratio}");
    assert!(a.agrees_with(&b, 3.0));
}

#[test]
fn sigma2_small_beta_and_lower_bound() {
    let beta = 0.05;
    let s = sigma2_white_mc(beta, 1.0, 20_000, 256, 8).unwrap();
    assert!((s.value / (beta * beta) - 1.0).abs() < 0.01);
    let s = sigma2_white_mc(1.0, 2.0, 50_000, 512, 9).unwrap();
    assert!(s.value >= 0.5 - 3.0 * s.stderr);
}

#[test]
fn sigma2_routes_agree() {
    let grid = 256;
    let direct = sigma2_white_mc(1.0, 1.0, 50_000, grid, 10).unwrap();
    let nested = sigma2_nested_mc(1.0, 1.0, 4000, 8, grid, 11).unwrap();
    let corrector = sigma2_corrector_mc(1.0, 1.0, 1000, 32, grid, 12).unwrap();
    assert!(direct.agrees_with(&nested, 3.0), "{direct:?} vs {nested:?}");
    assert!(
        direct.agrees_with(&corrector, 3.0),
        "{direct:?} vs {corrector:?}"
    );
    assert!(sigma2_nested_mc(1.0, 1.0, 100, 1, grid, 1).is_err());
    assert!(sigma2_corrector_mc(0.0, 1.0, 100, 8, grid, 1).is_err());
}

#[test]
fn sigma2_seeds_agree() {
    let a = sigma2_white_mc(1.0, 1.0, 20_000, 256, 20).unwrap();
    let b = sigma2_white_mc(1.0, 1.0, 20_000, 256, 21).unwrap();
    assert_ne!(a.value, b.value);
    assert!(a.agrees_with(&b, 3.0));
}

#[test]
fn decay_fit_at_small_beta() {
    let fit = sigma2_decay_fit(0.05, &[1.0, 4.0, 16.0, 64.0], 2000, 1).unwrap();
    assert!((fit.slope + 1.0).abs() < 0.1, "slope {}", fit.slope);
    assert!(matches!(
        sigma2_decay_fit(0.05, &[1.0, 4.0, 16.0], 100, 1),
        Err(Error::InvalidParameter { .. })
    ));
    assert!(matches!(
        sigma2_decay_fit(0.05, &[1.0, 2.0, 4.0, 8.0], 100, 1),
        Err(Error::InvalidParameter { .. })
    ));
}

#[test]
fn winding_diffusivity_routes() {
    let flat = winding_diffusivity_mc(0.0, 100, 4, 64, 1).unwrap();
    assert!((flat.estimate.value - 1.0).abs() < 1e-12);
    assert!(winding_diffusivity_mc(1.0, 100, 5, 64, 1).is_err());
    let w = winding_diffusivity_mc(1.0, 2000, 8, 256, 2).unwrap();
    assert!(w.estimate.value >= 1.0 - 3.0 * w.estimate.stderr);
    assert!(w.bias_shift.abs() <= 3.0 * w.bias_shift_stderr + 1e-3);
}

#[test]
fn expansion_coefficients() {
    let spec = CovarianceSpec::with_unit_mass(1, 2.0, &[0.3, 0.1]).unwrap();
    let e = gamma_expansion_smooth(2.0, 1, &spec, 2).unwrap();
    assert!((e.gamma2 + 0.25).abs() < 1e-15);
    assert!(e.gamma4 < 0.0);
    assert!(gamma_expansion_smooth(2.0, 1, &spec, 5).is_err());
    assert!(gamma_expansion_smooth(1.0, 1, &spec, 2).is_err());

    let decaying: Vec<f64> = (1..=60).map(|k| (-(k as f64)).exp()).collect();
    let spec = CovarianceSpec::with_unit_mass(1, 1.0, &decaying).unwrap();
    let a = gamma_expansion_smooth(1.0, 1, &spec, 25).unwrap();
    let b = gamma_expansion_smooth(1.0, 1, &spec, 50).unwrap();
    assert!((a.gamma4 - b.gamma4).abs() < 1e-10);

    let plane = CovarianceSpec::with_unit_mass(2, 2.0, &[0.1, 0.05, 0.0, 0.02]).unwrap();
    let e = gamma_expansion_smooth(2.0, 2, &plane, 1).unwrap();
    assert!((e.gamma2 + 1.0 / 8.0).abs() < 1e-15);
}

#[test]
fn corrector_chi_uniform_and_centering() {
    let (beta, length, n) = (1.0, 2.0, 32);
    let mut cache = CorrectorCache::in_memory(20_000);
    let uniform = DensityField::uniform(length, n).unwrap().into_field();
    let chi = corrector_chi(&uniform, beta, 10, 5, &mut cache).unwrap();
    let c = cache.get(beta, length, n, 5).unwrap();
    assert!((chi.value - 2.0 / (beta * beta) * (c.value + length.ln())).abs() < 1e-12);
    assert!(corrector_chi(&uniform, 0.0, 10, 5, &mut cache).is_err());

    let mut rng = RngStream::new(30, 0).rng();
    let values: Vec<f64> = (0..400)
        .map(|_| {
            let rho = sample_stationary_density(beta, length, n, &mut rng).unwrap();
            corrector_chi(&rho, beta, 50, 5, &mut cache).unwrap().value
        })
        .collect();
    let constant_se = 2.0 / (beta * beta) * c.stderr;
    let se = (variance(&values) / values.len() as f64 + constant_se * constant_se).sqrt();
    assert!(
        mean(&values).abs() <= 3.0 * se,
        "E χ = {} ± {se}",
        mean(&values)
    );
}

#[test]
fn corrector_cache_persists() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("constants.json");
    let first = CorrectorCache::persistent(&path, 500)
        .unwrap()
        .get(1.0, 1.0, 16, 3)
        .unwrap();
    assert!(path.exists());
    let again = CorrectorCache::persistent(&path, 500)
        .unwrap()
        .get(1.0, 1.0, 16, 3)
        .unwrap();
    assert_eq!(first, again);
}

#[test]
fn corrector_grad_of_uniform_vanishes() {
    let uniform = DensityField::uniform(1.0, 16).unwrap().into_field();
    let g = corrector_grad(&uniform, 1.0, 20_000, 4).unwrap();
    for (v, s) in g.field.values.iter().zip(&g.stderr) {
        assert!(v.abs() <= 4.0 * s, "{v} ± {s}");
    }
    assert!(corrector_grad(&uniform, 0.0, 100, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn corrector_grad_integrates_to_zero(values in prop::collection::vec(0.05f64..5.0, 8..40), seed in any::<u64>()) {
        let raw = LatticeField::new(1.5, values).unwrap();
        let rho = kpzlab::projective::normalize(&raw).unwrap();
        let g = corrector_grad(&rho, 1.2, 20, seed).unwrap();
        prop_assert!(g.weighted_integral(&rho).abs() < 1e-10);
    }

    #[test]
    fn closed_gamma_is_negative(beta in 0.01f64..5.0, length in 0.1f64..100.0) {
        prop_assert!(gamma_white_closed(beta, length) < 0.0);
        let e = Estimate::exact(gamma_white_closed(beta, length), 0);
        prop_assert_eq!(e.stderr, 0.0);
    }
}
