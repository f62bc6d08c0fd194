//! Height statistics `h(t, 0) = log Z(t, 0)` from direct simulation:
//! Lyapunov-exponent estimators, the CLT experiment, crossover scans and the
//! iterated-logarithm diagnostic.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::LatticeField;
use crate::noise::{coarsen_white, fill_bridge, fill_white, BridgePath, NoiseKind, RngStream};
use crate::parallel::try_map_replicas;
use crate::projective::normalize;
use crate::she::{Solver, SolverParams, SpaceTimeNoise, StepRecord};
use crate::stats::{
    ks_standard_normal, linear_fit, variance, variance_stderr, Estimate, KsResult, LinearFit,
    Moments,
};

/// Burn-in used for smooth noise, whose invariant law is not explicit.
pub const SMOOTH_BURN_IN: f64 = 2.0;

/// Stream layout of one replica: substream 0 draws the initial data, 1 is the SHE noise.
fn replica_streams(seed: u64, replica: usize) -> (RngStream, SpaceTimeNoise) {
    let root = RngStream::new(seed, replica as u64);
    (root.substream(0), SpaceTimeNoise::new(root.substream(1)))
}

/// Stationary initial data: `e^{βW}` for white noise (so `h(0, 0) = 0`), a
/// burnt-in density for smooth noise.
pub fn stationary_start(
    params: &SolverParams,
    stream: RngStream,
    flip: bool,
) -> Result<LatticeField> {
    match &params.noise {
        NoiseKind::White => {
            let mut w = vec![0.0; params.n + 1];
            fill_bridge(&mut w, params.length, &mut stream.rng());
            let s = if flip { -params.beta } else { params.beta };
            LatticeField::new(
                params.length,
                w[..params.n].iter().map(|v| (s * v).exp()).collect(),
            )
        }
        NoiseKind::Smooth(_) => {
            let mut noise = SpaceTimeNoise::new(stream);
            if flip {
                noise = noise.flipped();
            }
            let mut solver = Solver::new(
                params,
                &LatticeField::constant(params.length, params.n, 1.0)?,
            )?;
            solver.run_to_step(params.steps_to(SMOOTH_BURN_IN) as u64, &noise)?;
            Ok(normalize(&solver.field())?.into_field())
        }
    }
}

fn check_horizon(t: f64) -> Result<()> {
    if t < 4.0 {
        return Err(invalid(
            "T",
            format!("horizon {t} too short for slope estimates (need T >= 4)"),
        ));
    }
    Ok(())
}

/// Lyapunov-exponent estimators of one run configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimates {
    /// (a) OLS slope of `log Z̄_t` over `[T/2, T]`.
    pub slope: Estimate,
    /// (a') the same slope after subtracting the martingale part `M_t`, which has
    /// mean zero; it estimates the same number with far less noise.
    pub compensated_slope: Estimate,
    /// (b) time average of `−½β² 𝓡(ρ(s))` over `[1, T]`.
    pub overlap: Estimate,
}

/// Per-replica accumulator for the estimators.
struct GammaAccumulator {
    half: f64,
    burn: f64,
    beta2: f64,
    martingale: f64,
    xs: Vec<f64>,
    ys: Vec<f64>,
    compensated: Vec<f64>,
    overlap: Moments,
}

impl GammaAccumulator {
    fn new(horizon: f64, beta: f64) -> Self {
        Self {
            half: horizon / 2.0,
            burn: 1.0,
            beta2: beta * beta,
            martingale: 0.0,
            xs: Vec::new(),
            ys: Vec::new(),
            compensated: Vec::new(),
            overlap: Moments::new(),
        }
    }

    fn push(&mut self, s: &StepRecord) {
        self.martingale += s.mass_ratio_minus_one;
        if s.t >= self.half - 1e-12 {
            self.xs.push(s.t);
            self.ys.push(s.log_mass);
            self.compensated.push(s.log_mass - self.martingale);
        }
        if s.t > self.burn {
            self.overlap.push(-0.5 * self.beta2 * s.overlap);
        }
    }

    fn finish(&self) -> [f64; 3] {
        [
            linear_fit(&self.xs, &self.ys).slope,
            linear_fit(&self.xs, &self.compensated).slope,
            self.overlap.mean(),
        ]
    }
}

fn summarize(values: &[[f64; 3]], seed: u64, runtime: f64) -> GammaEstimates {
    let column = |c: usize| {
        let v: Vec<f64> = values.iter().map(|r| r[c]).collect();
        Estimate::from_samples(&v, seed).with_runtime(runtime)
    };
    GammaEstimates {
        slope: column(0),
        compensated_slope: column(1),
        overlap: column(2),
    }
}

pub fn estimate_gamma(
    params: &SolverParams,
    seed: u64,
    n_replicas: usize,
) -> Result<GammaEstimates> {
    params.validate()?;
    check_horizon(params.horizon)?;
    if n_replicas < 2 {
        return Err(invalid(
            "replicas",
            "need at least 2 replicas for standard errors",
        ));
    }
    if params.beta == 0.0 {
        let zero = Estimate {
            value: 0.0,
            stderr: 0.0,
            n: n_replicas as u64,
            seed,
            runtime_s: 0.0,
        };
        return Ok(GammaEstimates {
            slope: zero,
            compensated_slope: zero,
            overlap: zero,
        });
    }
    let start = std::time::Instant::now();
    let total = params.steps_to(params.horizon) as u64;
    let per = try_map_replicas(n_replicas, |r| {
        let (init, noise) = replica_streams(seed, r);
        let mut solver = Solver::new(params, &stationary_start(params, init, false)?)?;
        let mut acc = GammaAccumulator::new(params.horizon, params.beta);
        for _ in 0..total {
            acc.push(&solver.advance(&noise)?);
        }
        Ok(acc.finish())
    })?;
    Ok(summarize(&per, seed, start.elapsed().as_secs_f64()))
}

/// Estimates on a ladder of grids driven by one coupled white noise, plus a
/// polynomial extrapolation in `dx → 0` done per replica.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultilevelGamma {
    /// `(n, dt)` of each level, coarsest first.
    pub levels: Vec<(usize, f64)>,
    pub per_level: Vec<GammaEstimates>,
    pub extrapolated: GammaEstimates,
    /// Degree of the extrapolating polynomial in `dx`.
    pub order: usize,
}

/// Lagrange weights evaluating at `0` the polynomial through `(x_i, ·)`.
pub fn extrapolation_weights(x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            x.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, xj)| xj / (xj - x[i]))
                .product()
        })
        .collect()
}

/// Level `l` of `levels` uses `n·2^l` cells and `dt/4^l`, so `dt/dx²` is fixed
/// and every error term of the scheme is a power of `dx`. The finest level
/// draws the noise; coarser levels receive its cell averages summed over their
/// longer steps, so all levels see one realization. The `order + 1` finest
/// levels enter the extrapolation.
pub fn estimate_gamma_multilevel(
    params: &SolverParams,
    levels: usize,
    order: usize,
    seed: u64,
    n_replicas: usize,
) -> Result<MultilevelGamma> {
    params.validate()?;
    check_horizon(params.horizon)?;
    if !params.noise.is_white() {
        return Err(invalid(
            "noise",
            "grid coupling is implemented for white noise",
        ));
    }
    if levels == 0 || order + 1 > levels || n_replicas < 2 {
        return Err(invalid(
            "order",
            "need 1 <= order + 1 <= levels and at least 2 replicas",
        ));
    }
    let start = std::time::Instant::now();
    let ladder: Vec<SolverParams> = (0..levels)
        .map(|l| SolverParams {
            n: params.n << l,
            dt: params.dt / 4f64.powi(l as i32),
            ..params.clone()
        })
        .collect();
    let fine = ladder.last().unwrap();
    let total = fine.steps_to(params.horizon) as u64;
    let per = try_map_replicas(n_replicas, |r| {
        let (init, noise) = replica_streams(seed, r);
        let mut w = vec![0.0; fine.n + 1];
        fill_bridge(&mut w, params.length, &mut init.rng());
        let mut solvers = ladder
            .iter()
            .map(|p| {
                let stride = fine.n / p.n;
                let z0 = LatticeField::new(
                    p.length,
                    (0..p.n).map(|i| (p.beta * w[i * stride]).exp()).collect(),
                )?;
                Solver::new(p, &z0)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut accs: Vec<GammaAccumulator> = ladder
            .iter()
            .map(|_| GammaAccumulator::new(params.horizon, params.beta))
            .collect();
        let mut slices: Vec<Vec<f64>> = ladder.iter().map(|p| vec![0.0; p.n]).collect();
        let mut pending: Vec<Vec<f64>> = ladder.iter().map(|p| vec![0.0; p.n]).collect();
        let last = levels - 1;
        for k in 0..total {
            fill_white(
                &mut slices[last],
                fine.cell_variance(),
                &mut noise.step_rng(k),
            );
            for l in (0..last).rev() {
                let (lo, hi) = slices.split_at_mut(l + 1);
                coarsen_white(&hi[0], &mut lo[l]);
            }
            for l in 0..levels {
                pending[l]
                    .iter_mut()
                    .zip(&slices[l])
                    .for_each(|(p, s)| *p += s);
                let every = 1u64 << (2 * (last - l));
                if (k + 1) % every == 0 {
                    accs[l].push(&solvers[l].advance_with(&pending[l])?);
                    pending[l].iter_mut().for_each(|p| *p = 0.0);
                }
            }
        }
        Ok(accs.iter().map(|a| a.finish()).collect::<Vec<_>>())
    })?;
    let runtime = start.elapsed().as_secs_f64();
    let per_level = (0..levels)
        .map(|l| summarize(&per.iter().map(|v| v[l]).collect::<Vec<_>>(), seed, runtime))
        .collect();
    let used = &ladder[levels - order - 1..];
    let weights = extrapolation_weights(&used.iter().map(|p| p.dx()).collect::<Vec<_>>());
    let offset = levels - used.len();
    let extrapolated: Vec<[f64; 3]> = per
        .iter()
        .map(|v| {
            let mut out = [0.0; 3];
            for (i, w) in weights.iter().enumerate() {
                for c in 0..3 {
                    out[c] += w * v[offset + i][c];
                }
            }
            out
        })
        .collect();
    Ok(MultilevelGamma {
        levels: ladder.iter().map(|p| (p.n, p.dt)).collect(),
        per_level,
        extrapolated: summarize(&extrapolated, seed, runtime),
        order,
    })
}

/// `h(t, 0)` at each of `times` for `n_replicas` stationary replicas
/// (`flip` negates both the initial bridge and the noise).
pub fn height_paths(
    params: &SolverParams,
    times: &[f64],
    n_replicas: usize,
    seed: u64,
    flip: bool,
) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    let marks: Vec<u64> = times.iter().map(|t| params.steps_to(*t) as u64).collect();
    if marks.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("times", "must be nondecreasing"));
    }
    try_map_replicas(n_replicas, |r| {
        let (init, mut noise) = replica_streams(seed, r);
        if flip {
            noise = noise.flipped();
        }
        let mut solver = Solver::new(params, &stationary_start(params, init, flip)?)?;
        let mut out = Vec::with_capacity(marks.len());
        for &m in &marks {
            solver.run_to_step(m, &noise)?;
            out.push(solver.log_z(0));
        }
        Ok(out)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightSample {
    pub replica: usize,
    pub t: f64,
    pub h: f64,
    pub centered: f64,
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltResult {
    pub t: f64,
    pub gamma: f64,
    pub sigma2: f64,
    pub samples: Vec<HeightSample>,
    pub ks: KsResult,
    pub centered_mean: Estimate,
    /// Sample variance of `h − γt` divided by `t`, with its standard error.
    pub variance_per_time: Estimate,
}

pub const CLT_MIN_REPLICAS: usize = 100;

/// Normalizes `(h − γt)/(σ√t)` and tests it against `N(0, 1)`.
pub fn clt_from_heights(t: f64, heights: &[f64], gamma: f64, sigma2: f64, seed: u64) -> CltResult {
    let sd = (sigma2 * t).sqrt();
    let samples: Vec<HeightSample> = heights
        .iter()
        .enumerate()
        .map(|(replica, &h)| {
            let centered = h - gamma * t;
            HeightSample {
                replica,
                t,
                h,
                centered,
                normalized: centered / sd,
            }
        })
        .collect();
    let centered: Vec<f64> = samples.iter().map(|s| s.centered).collect();
    let normalized: Vec<f64> = samples.iter().map(|s| s.normalized).collect();
    let var = Estimate {
        value: variance(&centered) / t,
        stderr: variance_stderr(&centered) / t,
        n: centered.len() as u64,
        seed,
        runtime_s: 0.0,
    };
    CltResult {
        t,
        gamma,
        sigma2,
        ks: ks_standard_normal(&normalized),
        centered_mean: Estimate::from_samples(&centered, seed),
        variance_per_time: var,
        samples,
    }
}

/// Height CLT at time `t` with the given centering `γ` and variance `σ²`.
pub fn clt_experiment(
    params: &SolverParams,
    t: f64,
    n_replicas: usize,
    gamma: f64,
    sigma2: f64,
    seed: u64,
) -> Result<CltResult> {
    if params.beta == 0.0 {
        return Err(invalid(
            "beta",
            "h(t,0) is deterministic at beta = 0; nothing to test",
        ));
    }
    if n_replicas < CLT_MIN_REPLICAS {
        return Err(Error::Underpowered(format!(
            "{n_replicas} replicas < {CLT_MIN_REPLICAS}"
        )));
    }
    if !(sigma2 > 0.0) {
        return Err(invalid("sigma2", format!("must be positive, got {sigma2}")));
    }
    let start = std::time::Instant::now();
    let h: Vec<f64> = height_paths(params, &[t], n_replicas, seed, false)?
        .into_iter()
        .map(|v| v[0])
        .collect();
    let mut out = clt_from_heights(t, &h, gamma, sigma2, seed);
    out.centered_mean.runtime_s = start.elapsed().as_secs_f64();
    Ok(out)
}

pub fn write_height_csv<W: std::io::Write>(samples: &[HeightSample], mut out: W) -> Result<()> {
    writeln!(out, "replica,t,h,centered,normalized")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.replica, s.t, s.h, s.centered, s.normalized
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeScanConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub times: Vec<f64>,
}

impl RegimeScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=2.0 / 3.0 + 1e-12).contains(&self.alpha) {
            return Err(invalid(
                "alpha",
                format!("must lie in [0, 2/3], got {}", self.alpha),
            ));
        }
        if !(self.lambda > 0.0) {
            return Err(invalid("lambda", "must be positive"));
        }
        if self.times.len() < 2 || self.times.iter().any(|t| !(*t > 0.0)) {
            return Err(invalid("times", "need at least two positive times"));
        }
        Ok(())
    }

    pub fn length_at(&self, t: f64) -> f64 {
        self.lambda * t.powf(self.alpha)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub t: f64,
    pub length: f64,
    pub n: usize,
    pub variance: f64,
    pub variance_stderr: f64,
    /// `Var h / t^{2/3}`.
    pub kpz_scaled: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeScan {
    pub config: RegimeScanConfig,
    pub rows: Vec<RegimeRow>,
    pub fit: LinearFit,
    pub expected_exponent: f64,
}

impl RegimeScan {
    /// `max / min` of `Var h / t^{2/3}` over the scan.
    pub fn kpz_band_ratio(&self) -> f64 {
        let v: Vec<f64> = self.rows.iter().map(|r| r.kpz_scaled).collect();
        v.iter().copied().fold(0.0, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `Var h(t, 0)` along `L = λ t^α`. The cell size `params.dx()` is held fixed,
/// so `n` grows with `L` (rounded to an even count).
pub fn regime_scan(
    config: &RegimeScanConfig,
    params: &SolverParams,
    seed: u64,
    n_replicas: usize,
) -> Result<RegimeScan> {
    config.validate()?;
    params.validate()?;
    if !params.noise.is_white() {
        return Err(invalid(
            "noise",
            "the regime scan rescales the torus, which needs white noise",
        ));
    }
    let dx = params.dx();
    let mut rows = Vec::with_capacity(config.times.len());
    for (k, &t) in config.times.iter().enumerate() {
        let length = config.length_at(t);
        let n = (((length / dx) / 2.0).round() as usize * 2).max(8);
        let p = SolverParams {
            length,
            n,
            horizon: t,
            ..params.clone()
        };
        let h: Vec<f64> = height_paths(
            &p,
            &[t],
            n_replicas,
            seed.wrapping_add(k as u64 * 7919),
            false,
        )?
        .into_iter()
        .map(|v| v[0])
        .collect();
        let variance = variance(&h);
        rows.push(RegimeRow {
            t,
            length,
            n,
            variance,
            variance_stderr: variance_stderr(&h),
            kpz_scaled: variance / t.powf(2.0 / 3.0),
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.t.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.variance.ln()).collect();
    let sig: Vec<f64> = rows
        .iter()
        .map(|r| r.variance_stderr / r.variance)
        .collect();
    Ok(RegimeScan {
        config: config.clone(),
        fit: crate::stats::weighted_linear_fit(&x, &y, &sig),
        rows,
        expected_exponent: 1.0 - config.alpha / 2.0,
    })
}

/// Running iterated-logarithm statistic of one height path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LilPath {
    pub times: Vec<f64>,
    pub r: Vec<f64>,
    pub running_max: Vec<f64>,
    pub running_min: Vec<f64>,
}

impl LilPath {
    pub fn max_abs(&self) -> f64 {
        self.r.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `r(t) = (h(t,0) − γt)/√(2t log log t)` along a path sampled at `times`.
pub fn lil_diagnostic(times: &[f64], h: &[f64], gamma: f64) -> Result<LilPath> {
    if times.len() != h.len() || times.is_empty() {
        return Err(invalid("times", "need one height per time"));
    }
    if let Some(t) = times.iter().find(|t| **t <= std::f64::consts::E) {
        return Err(invalid(
            "t",
            format!("log log t undefined or nonpositive at t = {t}"),
        ));
    }
    let r: Vec<f64> = times
        .iter()
        .zip(h)
        .map(|(t, h)| (h - gamma * t) / (2.0 * t * t.ln().ln()).sqrt())
        .collect();
    let mut running_max = Vec::with_capacity(r.len());
    let mut running_min = Vec::with_capacity(r.len());
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    for v in &r {
        hi = hi.max(*v);
        lo = lo.min(*v);
        running_max.push(hi);
        running_min.push(lo);
    }
    Ok(LilPath {
        times: times.to_vec(),
        r,
        running_max,
        running_min,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LilSummary {
    pub sigma: f64,
    pub replicas: usize,
    /// Fraction of replicas with `|r(t)| < 2σ` on the whole window.
    pub fraction_within: f64,
    pub max_abs: Vec<f64>,
}

pub fn lil_experiment(
    params: &SolverParams,
    times: &[f64],
    n_replicas: usize,
    gamma: f64,
    sigma: f64,
    seed: u64,
) -> Result<(LilSummary, Vec<LilPath>)> {
    let paths = height_paths(params, times, n_replicas, seed, false)?;
    let lil = paths
        .iter()
        .map(|h| lil_diagnostic(times, h, gamma))
        .collect::<Result<Vec<_>>>()?;
    let max_abs: Vec<f64> = lil.iter().map(|p| p.max_abs()).collect();
    let within = max_abs.iter().filter(|m| **m < 2.0 * sigma).count();
    Ok((
        LilSummary {
            sigma,
            replicas: n_replicas,
            fraction_within: within as f64 / n_replicas as f64,
            max_abs,
        },
        lil,
    ))
}

/// `e^{βW}` restricted to the periodic grid, as used for stationary starts.
pub fn exp_bridge_field(bridge: &BridgePath, beta: f64) -> Result<LatticeField> {
    let n = bridge.n();
    LatticeField::new(
        bridge.length,
        bridge.values[..n]
            .iter()
            .map(|w| (beta * w).exp())
            .collect(),
    )
}
