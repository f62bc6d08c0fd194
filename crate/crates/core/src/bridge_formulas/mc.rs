//! Brownian-bridge Monte Carlo. Samples are processed in fixed blocks, each
//! with its own stream, and block moments are merged in block order.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::corrector::corrector_grad_values;
use crate::error::{invalid, Error, Result};
use crate::noise::{fill_bridge, RngStream, StreamRng};
use crate::parallel::{blocks, map_replicas};
use crate::stats::{linear_fit, weighted_linear_fit, Estimate, LinearFit, Moments};

pub const MC_BLOCK: usize = 4096;

/// Default bridge grid: 512 cells, refined as `λ = β√L` grows (the path roughness
/// seen by `e^{λW}` scales with `λ²`).
pub fn default_bridge_grid(lambda: f64) -> usize {
    let want = (32.0 * lambda * lambda).ceil() as usize;
    want.next_power_of_two().max(512)
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < 1000 {
        return Err(invalid(
            "n",
            format!("need at least 1000 samples, got {samples}"),
        ));
    }
    Ok(())
}

fn check_beta(beta: f64, length: f64) -> Result<()> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(invalid("beta", format!("must be >= 0, got {beta}")));
    }
    if !(length > 0.0) || !length.is_finite() {
        return Err(invalid("L", format!("must be positive, got {length}")));
    }
    Ok(())
}

/// Runs `per_sample` over `samples` draws, block-parallel, and merges the moments.
fn block_moments(
    samples: usize,
    seed: u64,
    purpose: u64,
    per_sample: impl Fn(&mut StreamRng, &mut Scratch) -> f64 + Sync + Send,
    grid: usize,
) -> Moments {
    let parts = blocks(samples, MC_BLOCK);
    let root = RngStream::new(seed, purpose);
    let results = map_replicas(parts.len(), |b| {
        let (id, count) = parts[b];
        let mut rng = root.substream(id as u64).rng();
        let mut scratch = Scratch::new(grid);
        let mut m = Moments::new();
        for _ in 0..count {
            m.push(per_sample(&mut rng, &mut scratch));
        }
        m
    });
    let mut total = Moments::new();
    results.iter().for_each(|m| total.merge(m));
    total
}

/// Same as [`block_moments`] but keeps every sample (in block order).
fn block_samples(
    samples: usize,
    seed: u64,
    purpose: u64,
    per_sample: impl Fn(&mut StreamRng, &mut Scratch) -> f64 + Sync + Send,
    grid: usize,
) -> Vec<f64> {
    let parts = blocks(samples, MC_BLOCK);
    let root = RngStream::new(seed, purpose);
    map_replicas(parts.len(), |b| {
        let (id, count) = parts[b];
        let mut rng = root.substream(id as u64).rng();
        let mut scratch = Scratch::new(grid);
        (0..count)
            .map(|_| per_sample(&mut rng, &mut scratch))
            .collect::<Vec<f64>>()
    })
    .concat()
}

/// Per-worker bridge buffers.
pub(crate) struct Scratch {
    pub w: [Vec<f64>; 3],
    pub e: [Vec<f64>; 3],
    pub acc: Vec<f64>,
    pub acc2: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(grid: usize) -> Self {
        let v = || vec![0.0; grid + 1];
        Self {
            w: [v(), v(), v()],
            e: [v(), v(), v()],
            acc: v(),
            acc2: v(),
        }
    }
}

/// Trapezoid rule on `values` (n+1 points, spacing `dx`).
pub(crate) fn trapezoid(values: &[f64], dx: f64) -> f64 {
    let n = values.len() - 1;
    dx * (values[1..n].iter().sum::<f64>() + 0.5 * (values[0] + values[n]))
}

fn exp_into(out: &mut [f64], w: &[f64], beta: f64) {
    out.iter_mut()
        .zip(w)
        .for_each(|(o, x)| *o = (beta * x).exp());
}

/// `∫_0^L e^{βW}` for `samples` independent bridges.
pub fn bridge_exp_integrals(
    beta: f64,
    length: f64,
    samples: usize,
    grid: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_beta(beta, length)?;
    let dx = length / grid as f64;
    Ok(block_samples(
        samples,
        seed,
        0,
        |rng, s| {
            fill_bridge(&mut s.w[0], length, rng);
            exp_into(&mut s.e[0], &s.w[0], beta);
            trapezoid(&s.e[0], dx)
        },
        grid,
    ))
}

/// `γ_L(β) ≈ −½ β² L · mean (∫_0^L e^{βW})^{-2}`.
pub fn gamma_white_bridge_mc(
    beta: f64,
    length: f64,
    samples: usize,
    grid: usize,
    seed: u64,
) -> Result<Estimate> {
    check_beta(beta, length)?;
    check_samples(samples)?;
    let start = Instant::now();
    let dx = length / grid as f64;
    let m = block_moments(
        samples,
        seed,
        0,
        |rng, s| {
            fill_bridge(&mut s.w[0], length, rng);
            exp_into(&mut s.e[0], &s.w[0], beta);
            trapezoid(&s.e[0], dx).powi(-2)
        },
        grid,
    );
    let est = Estimate {
        value: m.mean(),
        stderr: m.stderr(),
        n: m.count(),
        seed,
        runtime_s: 0.0,
    };
    Ok(est
        .scaled(-0.5 * beta * beta * length)
        .with_runtime(start.elapsed().as_secs_f64()))
}

/// `σ_L²(β) ≈ β² · mean ∫e^{β(W₁+W₂+2W₃)} / (∫e^{β(W₁+W₃)} ∫e^{β(W₂+W₃)})`.
pub fn sigma2_white_mc(
    beta: f64,
    length: f64,
    samples: usize,
    grid: usize,
    seed: u64,
) -> Result<Estimate> {
    check_beta(beta, length)?;
    check_samples(samples)?;
    let start = Instant::now();
    let dx = length / grid as f64;
    let m = block_moments(
        samples,
        seed,
        1,
        |rng, s| {
            for k in 0..3 {
                fill_bridge(&mut s.w[k], length, rng);
                exp_into(&mut s.e[k], &s.w[k], beta);
            }
            let [e1, e2, e3] = &s.e;
            for i in 0..=grid {
                s.acc[i] = e1[i] * e3[i];
                s.acc2[i] = e2[i] * e3[i];
            }
            let d1 = trapezoid(&s.acc, dx);
            let d2 = trapezoid(&s.acc2, dx);
            for i in 0..=grid {
                s.acc[i] *= s.acc2[i];
            }
            trapezoid(&s.acc, dx) / (d1 * d2)
        },
        grid,
    );
    let est = Estimate {
        value: m.mean(),
        stderr: m.stderr(),
        n: m.count(),
        seed,
        runtime_s: 0.0,
    };
    Ok(est
        .scaled(beta * beta)
        .with_runtime(start.elapsed().as_secs_f64()))
}

/// The conditional-expectation form of `σ_L²`: with `g = e^{β(W₁+W₃)}/∫e^{β(W₁+W₃)}`,
/// `σ² = β² E_{W₃} ∫ (E[g(y) | W₃])² dy`. The inner square is estimated without
/// bias by the U-statistic over `inner` fresh draws of `W₁` per outer `W₃`.
pub fn sigma2_nested_mc(
    beta: f64,
    length: f64,
    outer: usize,
    inner: usize,
    grid: usize,
    seed: u64,
) -> Result<Estimate> {
    check_beta(beta, length)?;
    if inner < 2 {
        return Err(invalid(
            "n_inner",
            "the unbiased inner estimator needs at least 2 draws",
        ));
    }
    let start = Instant::now();
    let dx = length / grid as f64;
    let m = block_moments(
        outer,
        seed,
        2,
        |rng, s| {
            fill_bridge(&mut s.w[2], length, rng);
            exp_into(&mut s.e[2], &s.w[2], beta);
            s.acc.iter_mut().for_each(|v| *v = 0.0);
            s.acc2.iter_mut().for_each(|v| *v = 0.0);
            for _ in 0..inner {
                fill_bridge(&mut s.w[0], length, rng);
                for i in 0..=grid {
                    s.e[0][i] = (beta * s.w[0][i]).exp() * s.e[2][i];
                }
                let z = trapezoid(&s.e[0], dx);
                for i in 0..=grid {
                    let g = s.e[0][i] / z;
                    s.acc[i] += g;
                    s.acc2[i] += g * g;
                }
            }
            let norm = 1.0 / (inner * (inner - 1)) as f64;
            for i in 0..=grid {
                s.acc[i] = (s.acc[i] * s.acc[i] - s.acc2[i]) * norm;
            }
            trapezoid(&s.acc, dx)
        },
        grid,
    );
    let est = Estimate {
        value: m.mean(),
        stderr: m.stderr(),
        n: m.count(),
        seed,
        runtime_s: 0.0,
    };
    Ok(est
        .scaled(beta * beta)
        .with_runtime(start.elapsed().as_secs_f64()))
}

/// Corrector route: `σ² = β² E ∫ ϱ(y)² (1 − ½β²𝒟χ(ϱ, y))² dy`, `ϱ ~ π_∞`. The
/// square is the product of two gradient estimates built from independent
/// inner sample sets.
pub fn sigma2_corrector_mc(
    beta: f64,
    length: f64,
    outer: usize,
    inner: usize,
    grid: usize,
    seed: u64,
) -> Result<Estimate> {
    check_beta(beta, length)?;
    if beta == 0.0 {
        return Err(invalid("beta", "the corrector is undefined at beta = 0"));
    }
    let start = Instant::now();
    let n = grid;
    let dx = length / n as f64;
    let m = block_moments(
        outer,
        seed,
        3,
        |rng, s| {
            fill_bridge(&mut s.w[2], length, rng);
            let rho = crate::noise::stationary_density_from_bridge(
                &crate::noise::BridgePath {
                    length,
                    values: s.w[2].clone(),
                },
                beta,
            );
            let ga = corrector_grad_values(&rho.values, beta, length, inner, rng, &mut s.w[0]);
            let gb = corrector_grad_values(&rho.values, beta, length, inner, rng, &mut s.w[0]);
            let half = 0.5 * beta * beta;
            rho.values
                .iter()
                .zip(ga.iter().zip(&gb))
                .map(|(r, (a, b))| r * r * (1.0 - half * a) * (1.0 - half * b))
                .sum::<f64>()
                * dx
        },
        grid,
    );
    let est = Estimate {
        value: m.mean(),
        stderr: m.stderr(),
        n: m.count(),
        seed,
        runtime_s: 0.0,
    };
    Ok(est
        .scaled(beta * beta)
        .with_runtime(start.elapsed().as_secs_f64()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub lengths: Vec<f64>,
    pub estimates: Vec<Estimate>,
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    /// Unweighted fit, reported next to the weighted one.
    pub ols: LinearFit,
}

/// Relative standard error above which a point makes the log–log fit meaningless.
pub const DECAY_MAX_REL_STDERR: f64 = 0.05;

/// Log–log slope of `σ_L²(β)` against `L`.
pub fn sigma2_decay_fit(beta: f64, lengths: &[f64], samples: usize, seed: u64) -> Result<DecayFit> {
    if lengths.len() < 4 {
        return Err(invalid(
            "L_list",
            format!("need at least 4 lengths, got {}", lengths.len()),
        ));
    }
    let lo = lengths.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = lengths.iter().copied().fold(0.0, f64::max);
    if !(lo > 0.0) || (hi / lo).log10() < 1.5 {
        return Err(invalid("L_list", "lengths must span at least 1.5 decades"));
    }
    let mut estimates = Vec::with_capacity(lengths.len());
    for (k, &l) in lengths.iter().enumerate() {
        let grid = default_bridge_grid(beta * l.sqrt());
        let e = sigma2_white_mc(beta, l, samples, grid, seed.wrapping_add(k as u64))?;
        if e.stderr > DECAY_MAX_REL_STDERR * e.value.abs() {
            return Err(Error::Underpowered(format!(
                "sigma2 at L = {l}: relative stderr {:.3} too large for a slope fit",
                e.stderr / e.value
            )));
        }
        estimates.push(e);
    }
    let x: Vec<f64> = lengths.iter().map(|l| l.ln()).collect();
    let y: Vec<f64> = estimates.iter().map(|e| e.value.ln()).collect();
    let sig: Vec<f64> = estimates.iter().map(|e| e.stderr / e.value).collect();
    let w = weighted_linear_fit(&x, &y, &sig);
    Ok(DecayFit {
        lengths: lengths.to_vec(),
        estimates,
        slope: w.slope,
        slope_stderr: w.slope_stderr,
        intercept: w.intercept,
        ols: linear_fit(&x, &y),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindingDiffusivity {
    pub estimate: Estimate,
    /// Same outer draws, first half of each inner set only.
    pub half_inner: Estimate,
    /// Paired difference (all − half) and its standard error.
    pub bias_shift: f64,
    pub bias_shift_stderr: f64,
}

/// `Σ(β) = 1 + β² E[𝒜²]` at `L = 1`, nested over `W₂`.
///
/// `𝒜 = ∫_0^1 Ξ(y) G(y) dy` with `G(y) = ∫_0^y (g − 1)`, `g = e^{β(W₁+W₃)}/∫e^{β(W₁+W₃)}`
/// and `Ξ(y) = E_{W₂}[e^{β(W₂−W₁)(y)} / (∫e^{β(W₂−W₁)})²]`. `𝒜²` is estimated
/// without bias by the U-statistic over the inner draws.
pub fn winding_diffusivity_mc(
    beta: f64,
    outer: usize,
    inner: usize,
    grid: usize,
    seed: u64,
) -> Result<WindingDiffusivity> {
    check_beta(beta, 1.0)?;
    if inner < 4 || !inner.is_multiple_of(2) {
        return Err(invalid(
            "n_inner",
            "need an even inner size >= 4 for the halving check",
        ));
    }
    let start = Instant::now();
    let dx = 1.0 / grid as f64;
    let u_stat = |a: &[f64]| {
        let m = a.len() as f64;
        let s: f64 = a.iter().sum();
        let s2: f64 = a.iter().map(|v| v * v).sum();
        (s * s - s2) / (m * (m - 1.0))
    };
    let pairs: Vec<(f64, f64)> = {
        let parts = blocks(outer, MC_BLOCK / 4);
        let root = RngStream::new(seed, 4);
        map_replicas(parts.len(), |b| {
            let (id, count) = parts[b];
            let mut rng = root.substream(id as u64).rng();
            let mut s = Scratch::new(grid);
            let mut a_vals = vec![0.0; inner];
            (0..count)
                .map(|_| {
                    fill_bridge(&mut s.w[0], 1.0, &mut rng);
                    fill_bridge(&mut s.w[2], 1.0, &mut rng);
                    for i in 0..=grid {
                        s.e[0][i] = (beta * (s.w[0][i] + s.w[2][i])).exp();
                    }
                    let z = trapezoid(&s.e[0], dx);
                    // G(y) by cumulative trapezoid of g − 1.
                    s.acc[0] = 0.0;
                    for i in 1..=grid {
                        let a = s.e[0][i - 1] / z - 1.0;
                        let b = s.e[0][i] / z - 1.0;
                        s.acc[i] = s.acc[i - 1] + 0.5 * dx * (a + b);
                    }
                    for a in a_vals.iter_mut() {
                        fill_bridge(&mut s.w[1], 1.0, &mut rng);
                        for i in 0..=grid {
                            s.e[1][i] = (beta * (s.w[1][i] - s.w[0][i])).exp();
                        }
                        let q = trapezoid(&s.e[1], dx);
                        let inv = 1.0 / (q * q);
                        for i in 0..=grid {
                            s.acc2[i] = s.e[1][i] * inv * s.acc[i];
                        }
                        *a = trapezoid(&s.acc2, dx);
                    }
                    (u_stat(&a_vals), u_stat(&a_vals[..inner / 2]))
                })
                .collect::<Vec<_>>()
        })
        .concat()
    };
    let b2 = beta * beta;
    let full: Vec<f64> = pairs.iter().map(|p| 1.0 + b2 * p.0).collect();
    let half: Vec<f64> = pairs.iter().map(|p| 1.0 + b2 * p.1).collect();
    let diff: Vec<f64> = pairs.iter().map(|p| b2 * (p.0 - p.1)).collect();
    let runtime = start.elapsed().as_secs_f64();
    let d = Moments::from_slice(&diff);
    let out = WindingDiffusivity {
        estimate: Estimate::from_samples(&full, seed).with_runtime(runtime),
        half_inner: Estimate::from_samples(&half, seed),
        bias_shift: d.mean(),
        bias_shift_stderr: d.stderr(),
    };
    if beta > 0.0 && out.bias_shift.abs() > 3.0 * out.bias_shift_stderr {
        return Err(Error::NestedBias(format!(
            "halving the inner sample moved Sigma by {:.3e} (stderr {:.3e})",
            out.bias_shift, out.bias_shift_stderr
        )));
    }
    Ok(out)
}
