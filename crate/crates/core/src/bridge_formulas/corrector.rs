//! The explicit corrector of the projective process (white noise, `d = 1`):
//!
//! `χ(ρ) = (2/β²)(E log ∫ρ₁ρ₂ − E log ∫ρρ₁)` and
//! `𝒟χ(ρ, y) = 2/β² − (2/β²) E[ρ₁(y) / ∫ρρ₁]`, with `ρ₁, ρ₂ ~ π_∞` independent.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::LatticeField;
use crate::noise::{fill_bridge, RngStream};
use crate::parallel::{blocks, map_replicas};
use crate::stats::{Estimate, Moments};

fn check(beta: f64, rho: &LatticeField) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(invalid(
            "beta",
            format!("the corrector needs beta > 0, got {beta}"),
        ));
    }
    rho.ensure_positive()
}

/// Fills `out` (length `n`) with a stationary density drawn through the bridge buffer `w` (length `n + 1`).
fn draw_density<R: Rng + ?Sized>(
    beta: f64,
    length: f64,
    rng: &mut R,
    w: &mut [f64],
    out: &mut [f64],
) {
    fill_bridge(w, length, rng);
    let n = out.len();
    let top = w[..n]
        .iter()
        .fold(f64::NEG_INFINITY, |m, v| m.max(beta * v));
    let mut mass = 0.0;
    for (o, v) in out.iter_mut().zip(w.iter()) {
        *o = (beta * v - top).exp();
        mass += *o;
    }
    let inv = n as f64 / (mass * length);
    out.iter_mut().for_each(|o| *o *= inv);
}

/// `E log ∫ρ₁ρ₂` for one `(β, L, grid)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorConstant {
    pub beta: f64,
    pub length: f64,
    pub grid: usize,
    pub seed: u64,
    pub estimate: Estimate,
}

impl CorrectorConstant {
    pub fn compute(beta: f64, length: f64, grid: usize, samples: usize, seed: u64) -> Result<Self> {
        if grid < 2 || samples < 2 {
            return Err(invalid("n", "need grid >= 2 and at least 2 samples"));
        }
        let start = Instant::now();
        let dx = length / grid as f64;
        let parts = blocks(samples, 1024);
        let root = RngStream::new(seed, 10);
        let moments = map_replicas(parts.len(), |b| {
            let (id, count) = parts[b];
            let mut rng = root.substream(id as u64).rng();
            let mut w = vec![0.0; grid + 1];
            let (mut r1, mut r2) = (vec![0.0; grid], vec![0.0; grid]);
            let mut m = Moments::new();
            for _ in 0..count {
                draw_density(beta, length, &mut rng, &mut w, &mut r1);
                draw_density(beta, length, &mut rng, &mut w, &mut r2);
                m.push((r1.iter().zip(&r2).map(|(a, b)| a * b).sum::<f64>() * dx).ln());
            }
            m
        });
        let mut total = Moments::new();
        moments.iter().for_each(|m| total.merge(m));
        let estimate = Estimate {
            value: total.mean(),
            stderr: total.stderr(),
            n: total.count(),
            seed,
            runtime_s: start.elapsed().as_secs_f64(),
        };
        Ok(Self {
            beta,
            length,
            grid,
            seed,
            estimate,
        })
    }

    fn matches(&self, beta: f64, length: f64, grid: usize, seed: u64) -> bool {
        self.beta == beta && self.length == length && self.grid == grid && self.seed == seed
    }
}

/// Computed constants, optionally persisted as JSON.
#[derive(Debug, Default)]
pub struct CorrectorCache {
    entries: Vec<CorrectorConstant>,
    path: Option<PathBuf>,
    /// Samples used when a constant has to be computed.
    pub samples: usize,
}

impl CorrectorCache {
    pub fn in_memory(samples: usize) -> Self {
        Self {
            entries: Vec::new(),
            path: None,
            samples,
        }
    }

    /// Loads `path` if it exists; new entries are written back to it.
    pub fn persistent(path: &Path, samples: usize) -> Result<Self> {
        let entries = if path.exists() {
            serde_json::from_str(&std::fs::read_to_string(path)?)?
        } else {
            Vec::new()
        };
        Ok(Self {
            entries,
            path: Some(path.to_path_buf()),
            samples,
        })
    }

    pub fn get(&mut self, beta: f64, length: f64, grid: usize, seed: u64) -> Result<Estimate> {
        if let Some(c) = self
            .entries
            .iter()
            .find(|c| c.matches(beta, length, grid, seed))
        {
            return Ok(c.estimate);
        }
        let c = CorrectorConstant::compute(beta, length, grid, self.samples.max(2), seed)?;
        self.entries.push(c);
        if let Some(path) = &self.path {
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, serde_json::to_string_pretty(&self.entries)?)?;
            std::fs::rename(tmp, path)?;
        }
        Ok(c.estimate)
    }
}

/// `χ(ρ)`; the constant term comes from `cache`, the `ρ`-dependent one from `n_inner` draws.
pub fn corrector_chi(
    rho: &LatticeField,
    beta: f64,
    n_inner: usize,
    seed: u64,
    cache: &mut CorrectorCache,
) -> Result<Estimate> {
    check(beta, rho)?;
    if n_inner < 2 {
        return Err(invalid("n_inner", "need at least 2 inner draws"));
    }
    let start = Instant::now();
    let n = rho.n();
    let dx = rho.dx();
    let mass = rho.integral();
    let constant = cache.get(beta, rho.length, n, seed)?;
    let mut rng = RngStream::new(seed, 11).rng();
    let mut w = vec![0.0; n + 1];
    let mut r1 = vec![0.0; n];
    let mut m = Moments::new();
    for _ in 0..n_inner {
        draw_density(beta, rho.length, &mut rng, &mut w, &mut r1);
        let o: f64 = rho.values.iter().zip(&r1).map(|(a, b)| a * b).sum::<f64>() * dx / mass;
        m.push(o.ln());
    }
    let c = 2.0 / (beta * beta);
    Ok(Estimate {
        value: c * (constant.value - m.mean()),
        stderr: c * constant.stderr.hypot(m.stderr()),
        n: m.count(),
        seed,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorGradient {
    /// `𝒟χ(ρ, y_i)`.
    pub field: LatticeField,
    /// Pointwise standard errors.
    pub stderr: Vec<f64>,
    pub n_inner: usize,
}

impl CorrectorGradient {
    /// `∫ 𝒟χ(ρ, y) ρ(y) dy`, zero for every sample set when `∫ρ = 1`.
    pub fn weighted_integral(&self, rho: &LatticeField) -> f64 {
        self.field
            .values
            .iter()
            .zip(&rho.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * rho.dx()
    }
}

/// `𝒟χ(ρ, ·)` on the grid of `rho`, one shared set of `n_inner` draws for all `y`.
pub fn corrector_grad(
    rho: &LatticeField,
    beta: f64,
    n_inner: usize,
    seed: u64,
) -> Result<CorrectorGradient> {
    check(beta, rho)?;
    if n_inner < 2 {
        return Err(invalid("n_inner", "need at least 2 inner draws"));
    }
    let n = rho.n();
    let dx = rho.dx();
    let mut rng = RngStream::new(seed, 12).rng();
    let mut w = vec![0.0; n + 1];
    let mut r1 = vec![0.0; n];
    let mut acc: Vec<Moments> = vec![Moments::new(); n];
    for _ in 0..n_inner {
        draw_density(beta, rho.length, &mut rng, &mut w, &mut r1);
        let o: f64 = rho.values.iter().zip(&r1).map(|(a, b)| a * b).sum::<f64>() * dx;
        acc.iter_mut().zip(&r1).for_each(|(m, r)| m.push(r / o));
    }
    let c = 2.0 / (beta * beta);
    Ok(CorrectorGradient {
        field: LatticeField {
            length: rho.length,
            t: rho.t,
            values: acc.iter().map(|m| c * (1.0 - m.mean())).collect(),
        },
        stderr: acc.iter().map(|m| c * m.stderr()).collect(),
        n_inner,
    })
}

/// Gradient values only, reusing caller buffers (`w` has length `n + 1`).
pub(crate) fn corrector_grad_values<R: Rng + ?Sized>(
    rho: &[f64],
    beta: f64,
    length: f64,
    n_inner: usize,
    rng: &mut R,
    w: &mut [f64],
) -> Vec<f64> {
    let n = rho.len();
    let dx = length / n as f64;
    let mut r1 = vec![0.0; n];
    let mut acc = vec![0.0; n];
    for _ in 0..n_inner {
        draw_density(beta, length, rng, &mut w[..n + 1], &mut r1);
        let o: f64 = rho.iter().zip(&r1).map(|(a, b)| a * b).sum::<f64>() * dx;
        acc.iter_mut().zip(&r1).for_each(|(a, r)| *a += r / o);
    }
    let c = 2.0 / (beta * beta);
    acc.iter().map(|a| c * (1.0 - a / n_inner as f64)).collect()
}
