use kpzlab::noise::{sample_stationary_density, CovarianceSpec, NoiseKind, RngStream};
use kpzlab::projective::{
    backward_density, forward_density, ledger, mixing_curve, normalize, overlap, DensityField,
    Measure, MixingSetup,
};
use kpzlab::she::{greens, solve, Solver, SolverParams, SpaceTimeNoise};
use kpzlab::stats::{ks_two_sample, mean, variance};
use kpzlab::{Error, LatticeField};
use proptest::prelude::*;

fn noise(seed: u64) -> SpaceTimeNoise {
    SpaceTimeNoise::new(RngStream::new(seed, 0))
}

#[test]
fn normalize_constant_and_idempotent() {
    let z = LatticeField::constant(2.0, 16, 7.5).unwrap();
    let rho = normalize(&z).unwrap();
    assert!(rho.values.iter().all(|v| (v - 0.5).abs() < 1e-15));
    let again = normalize(&rho).unwrap();
    assert_eq!(again.values, rho.values);
    let mut bad = z.clone();
    bad.values[0] = -1.0;
    assert!(matches!(normalize(&bad), Err(Error::Domain(_))));
}

#[test]
fn overlap_of_uniform_densities() {
    let u = DensityField::uniform(3.0, 32).unwrap().into_field();
    assert!((overlap(&u, &u, &NoiseKind::White).unwrap() - 1.0 / 3.0).abs() < 1e-14);
    let spec = CovarianceSpec::with_unit_mass(1, 3.0, &[0.2, 0.1]).unwrap();
    let smooth = NoiseKind::Smooth(std::sync::Arc::new(spec));
    assert!((overlap(&u, &u, &smooth).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    let other = DensityField::uniform(3.0, 16).unwrap().into_field();
    assert!(matches!(
        overlap(&u, &other, &NoiseKind::White),
        Err(Error::GridMismatch(_))
    ));
}

#[test]
fn stationary_overlap_mean() {
    // E ∫ϱ² = 1/L + β²/12.
    let mut rng = RngStream::new(21, 0).rng();
    let v: Vec<f64> = (0..20_000)
        .map(|_| {
            let rho = sample_stationary_density(1.0, 1.0, 1024, &mut rng).unwrap();
            overlap(&rho, &rho, &NoiseKind::White).unwrap()
        })
        .collect();
    let se = (variance(&v) / v.len() as f64).sqrt();
    assert!(
        (mean(&v) - 13.0 / 12.0).abs() <= 3.0 * se,
        "{} ± {se}",
        mean(&v)
    );
}

#[test]
fn forward_density_from_delta_spreads_to_uniform() {
    let params = SolverParams::white(0.0, 1.0, 16, 1.0 / 128.0, 3.0);
    let nz = noise(1);
    let short = greens(0.0, 0.05, &params, &nz).unwrap();
    let rho = forward_density(&short, &Measure::Delta(0)).unwrap();
    assert!(rho.values[0] > 2.0 * rho.values[8]);
    let long = greens(0.0, 3.0, &params, &nz).unwrap();
    let rho = forward_density(&long, &Measure::Delta(0)).unwrap();
    assert!(rho.values.iter().all(|v| (v - 1.0).abs() < 1e-10));
}

#[test]
fn forward_density_matches_normalized_solution() {
    let params = SolverParams::white(1.0, 1.0, 16, 1.0 / 256.0, 1.0);
    let nz = noise(2);
    let k = greens(0.0, 1.0, &params, &nz).unwrap();
    let f = forward_density(&k, &Measure::Lebesgue).unwrap();
    let z = solve(
        &LatticeField::constant(1.0, 16, 1.0).unwrap(),
        &params,
        &nz,
        &[1.0],
    )
    .unwrap();
    let direct = normalize(&z.snapshots[0]).unwrap();
    for (a, b) in f.values.iter().zip(&direct.values) {
        assert!((a - b).abs() < 1e-11 * b);
    }
    let b = backward_density(&k, &Measure::Lebesgue).unwrap();
    assert!((b.integral() - 1.0).abs() < 1e-12);
    assert!(matches!(
        forward_density(
            &k,
            &Measure::Density(DensityField::uniform(1.0, 8).unwrap())
        ),
        Err(Error::GridMismatch(_))
    ));
}

#[test]
fn ledger_identity_and_zero_beta() {
    let params = SolverParams::white(1.0, 1.0, 32, 1e-3, 2.0);
    let z0 = LatticeField::constant(1.0, 32, 1.0).unwrap();
    let tr = solve(&z0, &params, &noise(3), &[]).unwrap();
    let l = ledger(&tr, &params).unwrap();
    assert!(l.max_residual() < 1e-6 * l.times.len() as f64);
    assert!(l.bracket.windows(2).all(|w| w[1] >= w[0]));
    let pred = l.predictable_bracket(1.0);
    let last = l.bracket.len() - 1;
    assert!((pred[last] / l.bracket[last] - 1.0).abs() < 0.1);

    let flat = SolverParams::white(0.0, 1.0, 32, 1e-3, 1.0);
    let tr = solve(&z0, &flat, &noise(3), &[]).unwrap();
    let l = ledger(&tr, &flat).unwrap();
    assert!(l
        .martingale
        .iter()
        .chain(&l.bracket)
        .all(|v| v.abs() < 1e-12));
}

#[test]
fn martingale_has_mean_zero() {
    let params = SolverParams::white(1.0, 1.0, 16, 1.0 / 256.0, 1.0);
    let z0 = LatticeField::constant(1.0, 16, 1.0).unwrap();
    let m: Vec<f64> = (0..2000)
        .map(|r| {
            let tr = solve(&z0, &params, &noise(100 + r), &[]).unwrap();
            *ledger(&tr, &params).unwrap().martingale.last().unwrap()
        })
        .collect();
    let se = (variance(&m) / m.len() as f64).sqrt();
    assert!(mean(&m).abs() <= 3.0 * se, "{} ± {se}", mean(&m));
}

#[test]
fn stationary_measure_is_invariant() {
    // The scheme's own invariant law is off by O(dx); at n = 32 4000 draws already see it.
    let (n, dt) = (64, 1.0 / 4096.0);
    let params = SolverParams::white(1.0, 1.0, n, dt, 0.25);
    let mut evolved = Vec::new();
    let mut fresh = Vec::new();
    for r in 0..4000u64 {
        let mut rng = RngStream::new(31, r).rng();
        let rho = sample_stationary_density(1.0, 1.0, n, &mut rng).unwrap();
        let mut s = Solver::new(&params, &rho).unwrap();
        s.run_to_step(1024, &noise(40_000 + r)).unwrap();
        evolved.push(s.rho()[0]);
        fresh.push(
            sample_stationary_density(1.0, 1.0, n, &mut rng)
                .unwrap()
                .values[0],
        );
    }
    let ks = ks_two_sample(&evolved, &fresh);
    assert!(ks.p_value > 0.01, "KS p = {}", ks.p_value);
}

#[test]
fn mixing_identical_starts_and_zero_beta_rate() {
    let params = SolverParams::white(0.0, 2.0, 32, 1.0 / 128.0, 4.0);
    let same = MixingSetup {
        nu1: Measure::Lebesgue,
        nu2: Measure::Lebesgue,
        horizon: 1.0,
        sample_every: 0.1,
        fit_from: 0.2,
        replicas: 2,
    };
    let curve = mixing_curve(&same, &params, 1).unwrap();
    assert!(curve.mean.iter().all(|d| *d == 0.0));
    assert!(curve.fit.is_none());

    let setup = MixingSetup {
        nu1: Measure::Delta(0),
        nu2: Measure::Lebesgue,
        horizon: 4.0,
        sample_every: 0.1,
        fit_from: 1.0,
        replicas: 2,
    };
    let fit = mixing_curve(&setup, &params, 1).unwrap().fit.unwrap();
    let rate = 0.5 * (2.0 * std::f64::consts::PI / 2.0f64).powi(2);
    assert!(
        (fit.rate / rate - 1.0).abs() < 0.05,
        "rate {} vs {rate}",
        fit.rate
    );
}

#[test]
fn mixing_rate_positive_with_noise() {
    let params = SolverParams::white(1.0, 1.0, 32, 1e-3, 3.0);
    let setup = MixingSetup {
        nu1: Measure::Delta(0),
        nu2: Measure::Lebesgue,
        horizon: 3.0,
        sample_every: 0.02,
        fit_from: 0.5,
        replicas: 12,
    };
    let curve = mixing_curve(&setup, &params, 7).unwrap();
    let fit = curve.fit.unwrap();
    assert!(
        fit.ci95().0 > 0.0,
        "rate {} ci {:?}",
        fit.replica_rate,
        fit.ci95()
    );
    assert!(curve.q10.iter().zip(&curve.q90).all(|(a, b)| a <= b));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn overlap_is_nonnegative_and_symmetric(seed in any::<u64>(), beta in 0.0f64..3.0) {
        let mut rng = RngStream::new(seed, 0).rng();
        let a = sample_stationary_density(beta, 1.0, 32, &mut rng).unwrap();
        let b = sample_stationary_density(beta, 1.0, 32, &mut rng).unwrap();
        let ab = overlap(&a, &b, &NoiseKind::White).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - overlap(&b, &a, &NoiseKind::White).unwrap()).abs() < 1e-14 * ab.max(1.0));
    }

    #[test]
    fn normalize_gives_unit_mass(values in prop::collection::vec(1e-6f64..1e6, 4..64), length in 0.1f64..10.0) {
        let z = LatticeField::new(length, values).unwrap();
        let rho = normalize(&z).unwrap();
        prop_assert!((rho.integral() - 1.0).abs() < 1e-12);
    }
}
