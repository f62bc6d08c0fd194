//! Endpoint densities `ρ = Z / Z̄`, replica overlaps, the martingale ledger of
//! `log Z̄`, and synchronization (mixing) diagnostics.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::LatticeField;
use crate::noise::{CovarianceSpec, NoiseKind};
use crate::parallel::try_map_replicas;
use crate::she::{GreensKernel, NoiseSource, Solver, SolverParams, SpaceTimeNoise, Trajectory};
use crate::stats::{linear_fit, quantile, Moments};

/// A positive lattice field of unit integral.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityField(LatticeField);

impl Deref for DensityField {
    type Target = LatticeField;
    fn deref(&self) -> &LatticeField {
        &self.0
    }
}

impl DensityField {
    pub fn uniform(length: f64, n: usize) -> Result<Self> {
        Ok(Self(LatticeField::constant(length, n, 1.0 / length)?))
    }

    pub fn into_field(self) -> LatticeField {
        self.0
    }

    /// Wraps a field already known to be a density (checked to `1e-10`).
    pub fn from_density(field: LatticeField) -> Result<Self> {
        field.ensure_positive()?;
        let mass = field.integral();
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("integral {mass} is not 1")));
        }
        Ok(Self(field))
    }
}

pub fn normalize(z: &LatticeField) -> Result<DensityField> {
    z.ensure_positive()?;
    let mass = z.integral();
    Ok(DensityField(LatticeField {
        length: z.length,
        t: z.t,
        values: z.values.iter().map(|v| v / mass).collect(),
    }))
}

/// `𝓡(f, g) = ∬ f(x) g(y) R(x − y)`, which is `∫ f g` for white noise.
pub fn overlap(f: &LatticeField, g: &LatticeField, noise: &NoiseKind) -> Result<f64> {
    f.check_grid(g)?;
    let dx = f.dx();
    match noise {
        NoiseKind::White => Ok(f
            .values
            .iter()
            .zip(&g.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * dx),
        NoiseKind::Smooth(spec) => smooth_overlap(f, g, spec),
    }
}

fn smooth_overlap(f: &LatticeField, g: &LatticeField, spec: &CovarianceSpec) -> Result<f64> {
    spec.require_1d()?;
    if (spec.length - f.length).abs() > 1e-12 * f.length {
        return Err(Error::GridMismatch(format!(
            "covariance on L={}, fields on L={}",
            spec.length, f.length
        )));
    }
    let n = f.n();
    let dx = f.dx();
    let r: Vec<f64> = (0..n).map(|m| spec.r_at(m as f64 * dx)).collect();
    let mut acc = 0.0;
    for (i, fi) in f.values.iter().enumerate() {
        let row: f64 = g
            .values
            .iter()
            .enumerate()
            .map(|(j, gj)| gj * r[(i + n - j) % n])
            .sum();
        acc += fi * row;
    }
    Ok(acc * dx * dx)
}

/// Initial or terminal measure of a polymer endpoint.
#[derive(Clone, Debug, PartialEq)]
pub enum Measure {
    /// Lebesgue measure on the torus (weight 1, not normalized).
    Lebesgue,
    /// Unit mass in one cell, density `1/dx`.
    Delta(usize),
    Density(DensityField),
}

impl Measure {
    /// Density values on an `n`-point grid of length `length`.
    pub fn values(&self, length: f64, n: usize) -> Result<Vec<f64>> {
        match self {
            Measure::Lebesgue => Ok(vec![1.0; n]),
            Measure::Delta(cell) => Ok(LatticeField::delta(length, n, *cell)?.values),
            Measure::Density(d) => {
                if d.n() != n {
                    return Err(Error::GridMismatch(format!(
                        "measure on {} cells, grid {n}",
                        d.n()
                    )));
                }
                Ok(d.values.clone())
            }
        }
    }
}

fn normalize_vec(values: Vec<f64>, length: f64) -> Result<DensityField> {
    let field = LatticeField {
        length,
        t: 0.0,
        values,
    };
    if !(field.integral() > 0.0) {
        return Err(Error::Domain(
            "degenerate normalization: kernel image has no mass".into(),
        ));
    }
    normalize(&field)
}

/// `ρ_f(t, ·; s, ν) ∝ ∫ G_{t,s}(·, y) ν(dy)`.
pub fn forward_density(kernel: &GreensKernel, nu: &Measure) -> Result<DensityField> {
    let v = nu.values(kernel.length, kernel.n)?;
    let mut d = normalize_vec(kernel.apply(&v), kernel.length)?;
    d.0.t = kernel.t;
    Ok(d)
}

/// `ρ_b(t, ν; s, ·) ∝ ∫ ν(dx) G_{t,s}(x, ·)`.
pub fn backward_density(kernel: &GreensKernel, nu: &Measure) -> Result<DensityField> {
    let v = nu.values(kernel.length, kernel.n)?;
    let mut d = normalize_vec(kernel.apply_transpose(&v), kernel.length)?;
    d.0.t = kernel.s;
    Ok(d)
}

/// Running martingale decomposition of `log Z̄`.
///
/// On the lattice `M` is the discrete martingale with increments
/// `Z̄_{k+1}/Z̄_k − 1` and `⟨M⟩` collects `2(ΔM − log(1 + ΔM))`, so that
/// `log Z̄_t = log Z̄_0 + M_t − ½⟨M⟩_t` holds step by step. `⟨M⟩` agrees with
/// `β² ∫ 𝓡(ρ)` to leading order in `dt`; that predictable form is kept alongside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleLedger {
    pub times: Vec<f64>,
    pub martingale: Vec<f64>,
    pub bracket: Vec<f64>,
    pub overlap_integral: Vec<f64>,
    pub log_mass: Vec<f64>,
    pub initial_log_mass: f64,
}

impl MartingaleLedger {
    /// Largest `|log Z̄_t − log Z̄_0 − M_t + ½⟨M⟩_t|`.
    pub fn max_residual(&self) -> f64 {
        self.log_mass
            .iter()
            .zip(self.martingale.iter().zip(&self.bracket))
            .map(|(l, (m, b))| (l - self.initial_log_mass - m + 0.5 * b).abs())
            .fold(0.0, f64::max)
    }

    /// `β² ∫_0^t 𝓡(ρ(s)) ds`.
    pub fn predictable_bracket(&self, beta: f64) -> Vec<f64> {
        self.overlap_integral
            .iter()
            .map(|o| beta * beta * o)
            .collect()
    }
}

pub fn ledger(trajectory: &Trajectory, params: &SolverParams) -> Result<MartingaleLedger> {
    if trajectory.steps.is_empty() {
        return Err(Error::MissingRecord(
            "trajectory has no per-step records".into(),
        ));
    }
    let n = trajectory.steps.len();
    let mut out = MartingaleLedger {
        times: Vec::with_capacity(n),
        martingale: Vec::with_capacity(n),
        bracket: Vec::with_capacity(n),
        overlap_integral: Vec::with_capacity(n),
        log_mass: Vec::with_capacity(n),
        initial_log_mass: trajectory.initial_log_mass,
    };
    let (mut m, mut b, mut o) = (0.0, 0.0, 0.0);
    for s in &trajectory.steps {
        let x = s.mass_ratio_minus_one;
        m += x;
        b += 2.0 * (x - x.ln_1p());
        o += s.overlap * params.dt;
        out.times.push(s.t);
        out.martingale.push(m);
        out.bracket.push(b);
        out.overlap_integral.push(o);
        out.log_mass.push(s.log_mass);
    }
    Ok(out)
}

/// Exponential fit `d(t) ≈ A e^{−λ t}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub rate: f64,
    pub amplitude: f64,
    /// Mean and standard error of the per-replica fitted rates.
    pub replica_rate: f64,
    pub replica_rate_stderr: f64,
    pub replicas_fitted: usize,
}

impl ExpFit {
    /// Normal 95% interval of the mean per-replica rate.
    pub fn ci95(&self) -> (f64, f64) {
        let h = 1.96 * self.replica_rate_stderr;
        (self.replica_rate - h, self.replica_rate + h)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingCurve {
    pub times: Vec<f64>,
    pub per_replica: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub q10: Vec<f64>,
    pub q90: Vec<f64>,
    pub fit: Option<ExpFit>,
}

/// Distances below this are round-off and are excluded from the fits.
pub const MIXING_FIT_FLOOR: f64 = 1e-12;

pub struct MixingSetup {
    pub nu1: Measure,
    pub nu2: Measure,
    pub horizon: f64,
    pub sample_every: f64,
    pub fit_from: f64,
    pub replicas: usize,
}

fn fit_window(times: &[f64], d: &[f64], from: f64) -> Option<(f64, f64)> {
    let (x, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(d)
        .filter(|(t, v)| **t >= from && **v > MIXING_FIT_FLOOR)
        .map(|(t, v)| (*t, v.ln()))
        .unzip();
    if x.len() < 3 {
        return None;
    }
    let f = linear_fit(&x, &y);
    Some((-f.slope, f.intercept.exp()))
}

/// `sup_x |ρ_f(t,·;0,ν₁) − ρ_f(t,·;0,ν₂)|` under one shared noise per replica.
pub fn mixing_curve(setup: &MixingSetup, params: &SolverParams, seed: u64) -> Result<MixingCurve> {
    params.validate()?;
    let n = params.n;
    let stride = params.steps_to(setup.sample_every).max(1) as u64;
    let total = params.steps_to(setup.horizon) as u64;
    let times: Vec<f64> = (0..=total / stride)
        .map(|k| (k * stride) as f64 * params.dt)
        .collect();
    let z1 = LatticeField {
        length: params.length,
        t: 0.0,
        values: setup.nu1.values(params.length, n)?,
    };
    let z2 = LatticeField {
        length: params.length,
        t: 0.0,
        values: setup.nu2.values(params.length, n)?,
    };
    let per_replica = try_map_replicas(setup.replicas, |r| {
        let noise = SpaceTimeNoise::new(crate::noise::RngStream::new(seed, r as u64));
        let mut a = Solver::new(params, &z1)?;
        let mut b = Solver::new(params, &z2)?;
        let mut source = NoiseSource::new(params)?;
        let sup = |a: &Solver, b: &Solver| {
            a.rho()
                .iter()
                .zip(b.rho())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        let mut curve = vec![sup(&a, &b)];
        for k in 0..total {
            source.draw_step(&noise, k, params.dt)?;
            a.advance_with(&source.increments)?;
            b.advance_with(&source.increments)?;
            if (k + 1) % stride == 0 {
                curve.push(sup(&a, &b));
            }
        }
        Ok(curve)
    })?;
    let columns = times.len();
    let col = |j: usize| per_replica.iter().map(|c| c[j]).collect::<Vec<f64>>();
    let mean: Vec<f64> = (0..columns).map(|j| crate::stats::mean(&col(j))).collect();
    let q10 = (0..columns).map(|j| quantile(&col(j), 0.1)).collect();
    let q90 = (0..columns).map(|j| quantile(&col(j), 0.9)).collect();
    let fit = fit_window(&times, &mean, setup.fit_from).map(|(rate, amplitude)| {
        let mut rates = Moments::new();
        for c in &per_replica {
            if let Some((r, _)) = fit_window(&times, c, setup.fit_from) {
                rates.push(r);
            }
        }
        ExpFit {
            rate,
            amplitude,
            replica_rate: rates.mean(),
            replica_rate_stderr: rates.stderr(),
            replicas_fitted: rates.count() as usize,
        }
    });
    Ok(MixingCurve {
        times,
        per_replica,
        mean,
        q10,
        q90,
        fit,
    })
}

impl MixingCurve {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,mean_dist,q10,q90,fit_rate")?;
        let rate = self.fit.map(|f| f.rate).unwrap_or(f64::NAN);
        for j in 0..self.times.len() {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{}",
                self.times[j], self.mean[j], self.q10[j], self.q90[j], rate
            )?;
        }
        Ok(())
    }
}
