//! Dispatch of a validated config to the numerical modules.

use std::io::Write;

use kpzlab::bridge_formulas as bf;
use kpzlab::height;
use kpzlab::noise::{sample_stationary_density, CovarianceSpec, RngStream};
use kpzlab::projective::{ledger, mixing_curve, DensityField, Measure, MixingSetup};
use kpzlab::she::{self, SolverParams, SpaceTimeNoise};
use kpzlab::stats::Estimate;
use kpzlab::winding;
use kpzlab::LatticeField;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Context};
use crate::record::{quantity_key, write_atomic, ResultRecord};

fn constraint(field: &'static str, reason: impl Into<String>) -> CliError {
    CliError::Constraint {
        field,
        reason: reason.into(),
    }
}

fn solver_params(c: &ExperimentConfig) -> Result<SolverParams, CliError> {
    let p = match &c.covariance {
        None => SolverParams::white(c.beta, c.length, c.n, c.dt, c.horizon),
        Some(path) => {
            let spec = CovarianceSpec::load(path).context("loading covariance table")?;
            SolverParams::smooth(c.beta, spec, c.n, c.dt, c.horizon)
        }
    };
    p.validate().context("solver parameters")?;
    Ok(p)
}

fn white_only(c: &ExperimentConfig, what: &str) -> Result<(), CliError> {
    if c.covariance.is_some() {
        return Err(constraint(
            "covariance",
            format!("{what} is only available for white noise"),
        ));
    }
    Ok(())
}

fn bridge_grid(c: &ExperimentConfig) -> usize {
    if c.grid > 0 {
        c.grid
    } else {
        bf::default_bridge_grid(c.beta * c.length.sqrt())
    }
}

fn key(c: &ExperimentConfig, name: &str) -> String {
    quantity_key(name, c.beta, c.length)
}

/// Writes an artifact next to the record and lists it there.
fn artifact(
    c: &ExperimentConfig,
    record: &mut ResultRecord,
    suffix: &str,
    fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let name = format!("{}.{suffix}", c.stem());
    write_atomic(&c.out_dir.join(&name), fill)?;
    record.artifacts.push(name);
    Ok(())
}

fn io_of(e: kpzlab::Error) -> std::io::Error {
    match e {
        kpzlab::Error::Io(e) => e,
        other => std::io::Error::other(other.to_string()),
    }
}

fn density(c: &ExperimentConfig) -> Result<LatticeField, CliError> {
    match c.rho.as_str() {
        "uniform" => Ok(DensityField::uniform(c.length, c.n)
            .context("uniform density")?
            .into_field()),
        _ => {
            sample_stationary_density(c.beta, c.length, c.n, &mut RngStream::new(c.seed, 99).rng())
                .context("stationary density")
        }
    }
}

fn sigma2_for(c: &ExperimentConfig) -> Result<f64, CliError> {
    match c.sigma2 {
        Some(s) => Ok(s),
        None => {
            white_only(c, "computing sigma2")?;
            Ok(bf::sigma2_white_mc(
                c.beta,
                c.length,
                c.samples,
                bridge_grid(c),
                c.seed.wrapping_add(1),
            )
            .context("sigma2 for normalization")?
            .value)
        }
    }
}

fn gamma_for(c: &ExperimentConfig) -> Result<f64, CliError> {
    match c.gamma {
        Some(g) => Ok(g),
        None => {
            white_only(c, "the closed-form gamma")?;
            Ok(bf::gamma_white_closed(c.beta, c.length))
        }
    }
}

fn default_lil_times(horizon: f64) -> Vec<f64> {
    let lo = 10.0f64.min(horizon);
    (0..=40)
        .map(|k| lo * (horizon / lo).powf(k as f64 / 40.0))
        .collect()
}

/// Runs the configured command and returns its record (not yet persisted).
pub fn run(c: &ExperimentConfig) -> Result<ResultRecord, CliError> {
    let mut r = ResultRecord::new(c);
    match c.command.as_str() {
        "she-solve" => {
            let params = solver_params(c)?;
            let z0 = LatticeField::constant(c.length, c.n, 1.0).context("initial data")?;
            let noise = SpaceTimeNoise::new(RngStream::new(c.seed, 0));
            let times = if c.times.is_empty() {
                vec![c.horizon]
            } else {
                c.times.clone()
            };
            let traj = she::solve(&z0, &params, &noise, &times).context("she-solve")?;
            let l = ledger(&traj, &params).context("martingale ledger")?;
            let residual = l.max_residual();
            let budget = 1e-6 * traj.steps.len() as f64;
            r.check(
                "ledger-residual",
                residual <= budget,
                format!("{residual:.3e} <= {budget:.3e}"),
            );
            let last = traj
                .steps
                .last()
                .map(|s| s.log_mass)
                .unwrap_or(traj.initial_log_mass);
            r.details = json!({ "final_log_mass": last, "courant": params.courant(), "snapshots": traj.snapshots.len() });
            artifact(c, &mut r, "snapshots.csv", |w| {
                she::io::write_csv(&traj.snapshots, w).map_err(io_of)
            })?;
            if c.binary {
                artifact(c, &mut r, "snapshots.bin", |w| {
                    she::io::write_binary(&traj.snapshots, w).map_err(io_of)
                })?;
            }
        }
        "mixing" => {
            let params = solver_params(c)?;
            let setup = MixingSetup {
                nu1: Measure::Delta(0),
                nu2: Measure::Lebesgue,
                horizon: c.horizon,
                sample_every: c.sample_every,
                fit_from: c.fit_from,
                replicas: c.replicas,
            };
            let curve = mixing_curve(&setup, &params, c.seed).context("mixing curve")?;
            match curve.fit {
                Some(f) => {
                    let (lo, _) = f.ci95();
                    r.estimate(
                        key(c, "mixing_rate"),
                        "simulation",
                        Estimate {
                            value: f.replica_rate,
                            stderr: f.replica_rate_stderr,
                            n: f.replicas_fitted as u64,
                            seed: c.seed,
                            runtime_s: 0.0,
                        },
                    );
                    r.check(
                        "positive-rate",
                        lo > 0.0,
                        format!("95% CI lower end {lo:.4}"),
                    );
                    r.details = json!({ "mean_curve_rate": f.rate, "amplitude": f.amplitude });
                }
                None => r.check(
                    "positive-rate",
                    false,
                    "no fit window above the round-off floor",
                ),
            }
            artifact(c, &mut r, "mixing.csv", |w| {
                curve.write_csv(w).map_err(io_of)
            })?;
        }
        "gamma-closed" => {
            white_only(c, "gamma-closed")?;
            let g = bf::gamma_white_closed(c.beta, c.length);
            r.estimate(key(c, "gamma"), "closed", Estimate::exact(g, c.seed));
            r.details =
                json!({ "from_negative_moment": bf::gamma_white_from_ey(c.beta, c.length) });
        }
        "gamma-bridge" => {
            white_only(c, "gamma-bridge")?;
            let e = bf::gamma_white_bridge_mc(c.beta, c.length, c.samples, bridge_grid(c), c.seed)
                .context("gamma bridge")?;
            r.estimate(key(c, "gamma"), "bridge-mc", e);
        }
        "gamma-simulate" => {
            let params = solver_params(c)?;
            let estimates = if c.levels > 1 {
                let m = height::estimate_gamma_multilevel(
                    &params, c.levels, c.order, c.seed, c.replicas,
                )
                .context("multilevel gamma")?;
                r.details =
                    json!({ "levels": m.levels, "per_level": m.per_level, "order": m.order });
                m.extrapolated
            } else {
                height::estimate_gamma(&params, c.seed, c.replicas).context("gamma simulation")?
            };
            r.estimate(
                key(c, "gamma"),
                "simulation-compensated-slope",
                estimates.compensated_slope,
            );
            r.estimate(key(c, "gamma"), "simulation-slope", estimates.slope);
            r.estimate(key(c, "gamma"), "simulation-overlap", estimates.overlap);
        }
        "gamma-expand" => {
            let path = c
                .covariance
                .as_ref()
                .ok_or_else(|| constraint("covariance", "gamma-expand needs a covariance table"))?;
            let spec = CovarianceSpec::load(path).context("loading covariance table")?;
            let n_max = if c.n_max > 0 {
                c.n_max
            } else if spec.d == 1 {
                spec.k_max()
            } else {
                ((spec.rhat.len() - 1) as f64 / spec.d as f64)
                    .sqrt()
                    .floor() as usize
            };
            let e = bf::gamma_expansion_smooth(c.length, c.d, &spec, n_max.max(1))
                .context("small-beta expansion")?;
            r.estimate(
                quantity_key("gamma2", 0.0, c.length),
                "expansion",
                Estimate::exact(e.gamma2, c.seed),
            );
            r.estimate(
                quantity_key("gamma4", 0.0, c.length),
                "expansion",
                Estimate::exact(e.gamma4, c.seed),
            );
            let approx = e.gamma2 * c.beta.powi(2) + e.gamma4 * c.beta.powi(4);
            r.details =
                json!({ "tail_bound": e.tail_bound, "n_max": n_max, "gamma_at_beta": approx });
        }
        "sigma2-mc" => {
            white_only(c, "sigma2-mc")?;
            let grid = bridge_grid(c);
            let direct = bf::sigma2_white_mc(c.beta, c.length, c.samples, grid, c.seed)
                .context("sigma2 direct")?;
            r.estimate(key(c, "sigma2"), "bridge-mc", direct);
            if c.inner >= 2 {
                let outer = (c.samples / c.inner).max(2);
                let nested = bf::sigma2_nested_mc(
                    c.beta,
                    c.length,
                    outer,
                    c.inner,
                    grid,
                    c.seed.wrapping_add(1),
                )
                .context("sigma2 nested")?;
                r.estimate(key(c, "sigma2"), "nested-mc", nested);
            }
        }
        "sigma2-decay" => {
            white_only(c, "sigma2-decay")?;
            let fit = bf::sigma2_decay_fit(c.beta, &c.lengths, c.samples, c.seed)
                .context("sigma2 decay fit")?;
            for (l, e) in fit.lengths.iter().zip(&fit.estimates) {
                r.estimate(quantity_key("sigma2", c.beta, *l), "bridge-mc", *e);
            }
            r.estimate(
                format!("sigma2_decay_slope(beta={})", c.beta),
                "weighted-fit",
                Estimate {
                    value: fit.slope,
                    stderr: fit.slope_stderr,
                    n: fit.lengths.len() as u64,
                    seed: c.seed,
                    runtime_s: 0.0,
                },
            );
            r.details = json!({ "ols_slope": fit.ols.slope, "intercept": fit.intercept });
        }
        "sigma2-corrector" => {
            white_only(c, "sigma2-corrector")?;
            let e = bf::sigma2_corrector_mc(
                c.beta,
                c.length,
                c.samples,
                c.inner,
                bridge_grid(c),
                c.seed,
            )
            .context("sigma2 corrector route")?;
            r.estimate(key(c, "sigma2"), "corrector-mc", e);
        }
        "clt-height" => {
            let params = solver_params(c)?;
            let gamma = gamma_for(c)?;
            let sigma2 = sigma2_for(c)?;
            let out = height::clt_experiment(&params, c.horizon, c.replicas, gamma, sigma2, c.seed)
                .context("height CLT")?;
            r.estimate(
                key(c, "sigma2"),
                "simulation-variance",
                out.variance_per_time,
            );
            r.check(
                "ks-normal",
                out.ks.p_value > 0.01,
                format!("D = {:.4}, p = {:.4}", out.ks.statistic, out.ks.p_value),
            );
            r.details = json!({ "gamma": gamma, "sigma2": sigma2, "ks": out.ks, "centered_mean": out.centered_mean });
            artifact(c, &mut r, "heights.csv", |w| {
                height::write_height_csv(&out.samples, w).map_err(io_of)
            })?;
        }
        "clt-winding" => {
            let params = solver_params(c)?;
            let sigma = match c.sigma2 {
                Some(s) => s,
                None => {
                    if c.length != 1.0 {
                        return Err(constraint(
                            "L",
                            "the bridge formula for Sigma is on L = 1; pass sigma2",
                        ));
                    }
                    bf::winding_diffusivity_mc(
                        c.beta,
                        c.samples,
                        c.inner.max(4) & !1,
                        bridge_grid(c),
                        c.seed.wrapping_add(1),
                    )
                    .context("Sigma bridge formula")?
                    .estimate
                    .value
                }
            };
            let config = winding::WindingRunConfig {
                t: c.horizon,
                boundaries: vec![c.boundary[0]],
                n_env: c.envs,
                paths_per_env: 1,
                lag_max: 0,
                quenched: false,
            };
            let run = winding::run_environments(&params, &config, c.seed)
                .context("winding environments")?
                .remove(0);
            let (z, ks) = winding::winding_clt(&run, sigma).context("winding CLT")?;
            r.check(
                "ks-normal",
                ks.p_value > 0.01,
                format!("D = {:.4}, p = {:.4}", ks.statistic, ks.p_value),
            );
            r.details = json!({ "sigma": sigma, "ks": ks });
            artifact(c, &mut r, "winding_clt.csv", |w| {
                writeln!(w, "env,normalized")?;
                z.iter()
                    .enumerate()
                    .try_for_each(|(i, v)| writeln!(w, "{i},{v}"))
            })?;
        }
        "winding-sample" => {
            let params = solver_params(c)?;
            let root = RngStream::new(c.seed, 0);
            let boundary =
                winding::BoundaryMeasures::new(c.boundary[0], &params, &root.substream(0))
                    .context("boundary")?;
            let chain = winding::build_chain(
                c.horizon,
                &params,
                boundary,
                &SpaceTimeNoise::new(root.substream(1)),
            )
            .context("winding chain")?;
            let samples =
                winding::sample_displacement(&chain, c.paths, &mut root.substream(2).rng());
            let endpoints: Vec<f64> = samples.iter().map(|s| s.endpoint).collect();
            r.estimate(
                format!(
                    "quenched_endpoint_mean(beta={},L={},t={},seed={})",
                    c.beta, c.length, c.horizon, c.seed
                ),
                "path-sampling",
                Estimate::from_samples(&endpoints, c.seed),
            );
            if c.quenched {
                let law = winding::quenched_moments(&chain).context("quenched law")?;
                r.estimate(
                    format!(
                        "quenched_endpoint_mean(beta={},L={},t={},seed={})",
                        c.beta, c.length, c.horizon, c.seed
                    ),
                    "exact-quenched",
                    Estimate::exact(law.mean, c.seed),
                );
                r.details = json!({ "quenched": law });
            }
            artifact(c, &mut r, "paths.csv", |w| {
                writeln!(w, "path,winding,endpoint,displacement")?;
                samples.iter().enumerate().try_for_each(|(i, s)| {
                    writeln!(w, "{i},{},{},{}", s.winding, s.endpoint, s.displacement)
                })
            })?;
        }
        "winding-quenched" => {
            let params = solver_params(c)?;
            let config = winding::WindingRunConfig {
                t: c.horizon,
                boundaries: c.boundary.clone(),
                n_env: c.envs,
                paths_per_env: 0,
                lag_max: 0,
                quenched: true,
            };
            let runs = winding::run_environments(&params, &config, c.seed)
                .context("winding environments")?;
            let qkey = format!(
                "quenched_variance(beta={},L={},t={})",
                c.beta, c.length, c.horizon
            );
            r.estimate(qkey.clone(), "closed", Estimate::exact(c.horizon, c.seed));
            let mut per = Vec::new();
            for run in &runs {
                let e =
                    winding::mean_quenched_variance(run, c.seed).context("quenched variance")?;
                r.estimate(
                    qkey.clone(),
                    &format!("exact-quenched-{}", boundary_name(run.boundary)),
                    e,
                );
                per.push(
                    run.environments
                        .iter()
                        .map(|e| e.quenched.as_ref().map(|q| q.variance))
                        .collect::<Vec<_>>(),
                );
            }
            r.details = json!({ "per_environment": per });
        }
        "winding-sigma" => {
            let params = solver_params(c)?;
            let e =
                winding::sigma_empirical(&params, c.horizon, c.envs, c.paths, c.lag_max, c.seed)
                    .context("empirical Sigma")?;
            let skey = quantity_key("Sigma", c.beta, c.length);
            r.estimate(skey.clone(), "path-variance", e.path_variance);
            r.estimate(skey.clone(), "sum-of-covariances", e.sum_of_covariances);
            if c.length == 1.0 && c.covariance.is_none() {
                let outer = (c.samples / 50).max(2);
                let b = bf::winding_diffusivity_mc(
                    c.beta,
                    outer,
                    c.inner.max(4) & !1,
                    bridge_grid(c),
                    c.seed.wrapping_add(1),
                )
                .context("Sigma bridge formula")?;
                r.estimate(skey, "bridge-mc", b.estimate);
            }
            r.details = json!({ "covariances": e.covariances, "tail": e.tail });
        }
        "corrector-chi" => {
            white_only(c, "the corrector")?;
            let rho = density(c)?;
            let cache_path = c.out_dir.join("corrector-constants.cache");
            std::fs::create_dir_all(&c.out_dir).map_err(|source| CliError::Io {
                path: c.out_dir.clone(),
                source,
            })?;
            let mut cache = bf::CorrectorCache::persistent(&cache_path, c.samples)
                .context("corrector cache")?;
            let e = bf::corrector_chi(&rho, c.beta, c.samples, c.seed, &mut cache)
                .context("corrector chi")?;
            r.estimate(
                format!(
                    "chi(beta={},L={},rho={},n={})",
                    c.beta, c.length, c.rho, c.n
                ),
                "bridge-mc",
                e,
            );
        }
        "corrector-grad" => {
            white_only(c, "the corrector")?;
            let rho = density(c)?;
            let g = bf::corrector_grad(&rho, c.beta, c.samples, c.seed)
                .context("corrector gradient")?;
            let integral = g.weighted_integral(&rho);
            r.check(
                "weighted-integral",
                integral.abs() <= 1e-8,
                format!("∫𝒟χ ρ = {integral:.3e}"),
            );
            let z_max = g
                .field
                .values
                .iter()
                .zip(&g.stderr)
                .map(|(v, s)| (v / s).abs())
                .fold(0.0, f64::max);
            r.details = json!({ "weighted_integral": integral, "max_abs_z": z_max });
            artifact(c, &mut r, "grad.csv", |w| {
                writeln!(w, "x,grad,stderr")?;
                (0..g.field.n()).try_for_each(|i| {
                    writeln!(w, "{},{},{}", g.field.x(i), g.field.values[i], g.stderr[i])
                })
            })?;
        }
        "yor" => {
            let spec = bf::QuadratureSpec::default();
            let mut rows = Vec::new();
            for &lambda in &c.lambdas {
                let m = bf::yor_moments_checked(lambda, &[0.0, -2.0], &spec)
                    .context("Yor quadrature")?;
                let ekey = format!("E[Y^-2](lambda={lambda})");
                r.estimate(
                    ekey.clone(),
                    "closed",
                    Estimate::exact(bf::ey_minus2_closed(lambda), c.seed),
                );
                r.estimate(ekey, "yor-quadrature", Estimate::exact(m[1], c.seed));
                let norm_ok = (m[0] - 1.0).abs() <= 1e-6;
                let moment_ok = (m[1] - bf::ey_minus2_closed(lambda)).abs() <= 1e-4;
                r.check(
                    &format!("normalization(lambda={lambda})"),
                    norm_ok,
                    format!("{:.3e}", m[0] - 1.0),
                );
                r.check(
                    &format!("negative-moment(lambda={lambda})"),
                    moment_ok,
                    format!("{:.3e}", m[1] - bf::ey_minus2_closed(lambda)),
                );
                rows.push(json!({ "lambda": lambda, "mass": m[0], "ey_minus2": m[1] }));
            }
            r.details = json!(rows);
        }
        "lil" => {
            let params = solver_params(c)?;
            let gamma = gamma_for(c)?;
            let sigma = sigma2_for(c)?.sqrt();
            let times = if c.times.is_empty() {
                default_lil_times(c.horizon)
            } else {
                c.times.clone()
            };
            let (summary, paths) =
                height::lil_experiment(&params, &times, c.replicas, gamma, sigma, c.seed)
                    .context("LIL diagnostic")?;
            r.check(
                "within-2-sigma",
                summary.fraction_within >= 0.95,
                format!("{:.1}% of replicas", 100.0 * summary.fraction_within),
            );
            r.details = json!({ "gamma": gamma, "sigma": sigma, "fraction_within": summary.fraction_within, "max_abs": summary.max_abs });
            artifact(c, &mut r, "lil.csv", |w| {
                writeln!(w, "replica,t,r,running_max,running_min")?;
                paths.iter().enumerate().try_for_each(|(k, p)| {
                    (0..p.times.len()).try_for_each(|i| {
                        writeln!(
                            w,
                            "{k},{},{},{},{}",
                            p.times[i], p.r[i], p.running_max[i], p.running_min[i]
                        )
                    })
                })
            })?;
        }
        other => return Err(constraint("command", format!("unknown command `{other}`"))),
    }
    Ok(r)
}

fn boundary_name(b: winding::Boundary) -> &'static str {
    match b {
        winding::Boundary::LebesgueDelta => "lebesgue-delta",
        winding::Boundary::Stationary => "stationary",
    }
}
