use rand::Rng;

use super::heat::{HeatPropagator, POSITIVITY_FLOOR};
use super::params::SolverParams;
use crate::error::{Error, Result};
use crate::field::LatticeField;
use crate::noise::{fill_white, NoiseKind, NoiseSlice, RngStream, SmoothSynth, StreamRng};

/// Space-time noise addressed by step index: the slice of step `k` depends only
/// on `(stream, k)`, so kernels over `[s, u]` and `[u, t]` see the same
/// realization as one over `[s, t]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceTimeNoise {
    pub stream: RngStream,
    sign: f64,
}

impl SpaceTimeNoise {
    pub fn new(stream: RngStream) -> Self {
        Self { stream, sign: 1.0 }
    }

    /// The realization `-ξ`.
    pub fn flipped(self) -> Self {
        Self {
            sign: -self.sign,
            ..self
        }
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }

    pub fn step_rng(&self, k: u64) -> StreamRng {
        self.stream.substream(k).rng()
    }
}

/// Produces the noise increments of a step and the multiplicative factors
/// `exp(β ξ_i − ½ β² Var ξ_i)`.
pub(crate) struct NoiseSource {
    beta: f64,
    var: f64,
    synth: Option<SmoothSynth>,
    pub(crate) increments: Vec<f64>,
}

impl NoiseSource {
    pub(crate) fn new(params: &SolverParams) -> Result<Self> {
        let synth = match &params.noise {
            NoiseKind::White => None,
            NoiseKind::Smooth(spec) => Some(SmoothSynth::new(spec, params.n)?),
        };
        Ok(Self {
            beta: params.beta,
            var: params.cell_variance(),
            synth,
            increments: vec![0.0; params.n],
        })
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R, dt: f64, sign: f64) -> Result<()> {
        match &mut self.synth {
            None => fill_white(&mut self.increments, self.var, rng),
            Some(s) => s.fill(dt, rng, &mut self.increments)?,
        }
        if sign < 0.0 {
            self.increments.iter_mut().for_each(|v| *v = -*v);
        }
        Ok(())
    }

    pub(crate) fn draw_step(&mut self, noise: &SpaceTimeNoise, k: u64, dt: f64) -> Result<()> {
        let mut rng = noise.step_rng(k);
        self.draw(&mut rng, dt, noise.sign)
    }

    pub(crate) fn factors(&self, out: &mut [f64]) {
        factors_into(self.beta, self.var, &self.increments, out);
    }
}

pub(crate) fn factors_into(beta: f64, var: f64, increments: &[f64], out: &mut [f64]) {
    let comp = 0.5 * beta * beta * var;
    for (o, x) in out.iter_mut().zip(increments) {
        *o = (beta * x - comp).exp();
    }
}

/// One-step diagnostics of the normalized evolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// Time after the step.
    pub t: f64,
    /// `log Z̄` after the step.
    pub log_mass: f64,
    /// `Z̄_{k+1} / Z̄_k − 1`.
    pub mass_ratio_minus_one: f64,
    /// Replica overlap of the heat-propagated density the noise acts on.
    pub overlap: f64,
}

/// SHE evolution stored as `(log Z̄_t, ρ_t)`, which keeps long runs free of under/overflow.
pub struct Solver {
    params: SolverParams,
    heat: HeatPropagator,
    source: NoiseSource,
    rho: Vec<f64>,
    factors: Vec<f64>,
    log_mass: f64,
    step: u64,
    smooth_weights: Option<Vec<f64>>,
}

impl Solver {
    /// Starts at time `0` from nonnegative data of positive mass.
    pub fn new(params: &SolverParams, z0: &LatticeField) -> Result<Self> {
        Self::starting_at(params, z0, 0)
    }

    /// Starts at step index `step0` (time `step0 · dt`), reading the shared noise from there on.
    pub fn starting_at(params: &SolverParams, z0: &LatticeField, step0: u64) -> Result<Self> {
        params.validate()?;
        if z0.n() != params.n || (z0.length - params.length).abs() > 1e-12 * params.length {
            return Err(Error::GridMismatch(format!(
                "initial data on (L={}, n={}), solver on (L={}, n={})",
                z0.length,
                z0.n(),
                params.length,
                params.n
            )));
        }
        if z0.values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(
                "initial data must be nonnegative and finite".into(),
            ));
        }
        let mass = z0.integral();
        if !(mass > 0.0) {
            return Err(Error::Domain("initial data has zero mass".into()));
        }
        let rho = z0.values.iter().map(|v| v / mass).collect();
        let smooth_weights = match &params.noise {
            NoiseKind::White => None,
            NoiseKind::Smooth(spec) => Some(overlap_weights(spec, params.n)),
        };
        Ok(Self {
            heat: HeatPropagator::new(params.n, params.length, params.dt),
            source: NoiseSource::new(params)?,
            factors: vec![0.0; params.n],
            params: params.clone(),
            rho,
            log_mass: mass.ln(),
            step: step0,
            smooth_weights,
        })
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn t(&self) -> f64 {
        self.step as f64 * self.params.dt
    }

    pub fn log_mass(&self) -> f64 {
        self.log_mass
    }

    /// `h(t, x_i) = log Z̄_t + log ρ(t, x_i)`.
    pub fn log_z(&self, i: usize) -> f64 {
        self.log_mass + self.rho[i].ln()
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn density(&self) -> LatticeField {
        LatticeField {
            length: self.params.length,
            t: self.t(),
            values: self.rho.clone(),
        }
    }

    pub fn field(&self) -> LatticeField {
        let m = self.log_mass.exp();
        LatticeField {
            length: self.params.length,
            t: self.t(),
            values: self.rho.iter().map(|r| r * m).collect(),
        }
    }

    /// Advances one step with the slice of the shared noise at the current step index.
    pub fn advance(&mut self, noise: &SpaceTimeNoise) -> Result<StepRecord> {
        self.source.draw_step(noise, self.step, self.params.dt)?;
        self.source.factors(&mut self.factors);
        Ok(self.apply_factors())
    }

    /// Advances one step with explicitly supplied increments.
    pub fn advance_with(&mut self, increments: &[f64]) -> Result<StepRecord> {
        if increments.len() != self.params.n {
            return Err(Error::GridMismatch(format!(
                "slice of {} cells for grid of {}",
                increments.len(),
                self.params.n
            )));
        }
        factors_into(
            self.params.beta,
            self.params.cell_variance(),
            increments,
            &mut self.factors,
        );
        Ok(self.apply_factors())
    }

    fn apply_factors(&mut self) -> StepRecord {
        let dx = self.params.dx();
        let overlap = match &self.smooth_weights {
            None => {
                self.heat.apply(&mut self.rho);
                self.rho.iter().map(|r| r * r).sum::<f64>() * dx
            }
            Some(w) => {
                let mut acc = 0.0;
                self.heat.apply_observed(&mut self.rho, |spec| {
                    acc = spec.iter().zip(w).map(|(c, w)| w * c.norm_sqr()).sum();
                });
                acc
            }
        };
        if self.params.beta == 0.0 {
            // Pure heat flow conserves mass; skip the round-off of renormalizing.
            self.step += 1;
            return StepRecord {
                t: self.t(),
                log_mass: self.log_mass,
                mass_ratio_minus_one: 0.0,
                overlap,
            };
        }
        let mut mass = 0.0;
        for (r, f) in self.rho.iter_mut().zip(&self.factors) {
            *r *= f;
            mass += *r;
        }
        mass *= dx;
        let inv = 1.0 / mass;
        for r in self.rho.iter_mut() {
            *r = (*r * inv).max(POSITIVITY_FLOOR);
        }
        self.log_mass += mass.ln();
        self.step += 1;
        StepRecord {
            t: self.t(),
            log_mass: self.log_mass,
            mass_ratio_minus_one: mass - 1.0,
            overlap,
        }
    }

    /// Runs until the step index reaches `target`.
    pub fn run_to_step(&mut self, target: u64, noise: &SpaceTimeNoise) -> Result<()> {
        while self.step < target {
            self.advance(noise)?;
        }
        Ok(())
    }
}

/// Weights turning the scaled spectrum of the heat step (`DFT/n`) into `∬ f f R`.
fn overlap_weights(spec: &crate::noise::CovarianceSpec, n: usize) -> Vec<f64> {
    let l = spec.length;
    let dx = l / n as f64;
    let scale = (n as f64 * dx).powi(2) / l.sqrt();
    (0..=n / 2)
        .map(|k| {
            let c = spec.rhat.get(k).copied().unwrap_or(0.0);
            let mult = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                1.0
            } else {
                2.0
            };
            scale * mult * c
        })
        .collect()
}

/// One splitting step on raw (unnormalized) data.
pub fn step(
    field: &LatticeField,
    slice: &NoiseSlice,
    params: &SolverParams,
) -> Result<LatticeField> {
    params.validate()?;
    field.ensure_positive()?;
    if field.n() != params.n || slice.increments.len() != params.n {
        return Err(Error::GridMismatch(format!(
            "field n={}, slice n={}, params n={}",
            field.n(),
            slice.increments.len(),
            params.n
        )));
    }
    if (slice.dt - params.dt).abs() > 1e-15 * params.dt {
        return Err(Error::GridMismatch(format!(
            "slice dt={} vs params dt={}",
            slice.dt, params.dt
        )));
    }
    let mut values = field.values.clone();
    HeatPropagator::new(params.n, params.length, params.dt).apply(&mut values);
    let var = slice.cell_variance(params.dx());
    let mut factors = vec![0.0; params.n];
    factors_into(params.beta, var, &slice.increments, &mut factors);
    values.iter_mut().zip(&factors).for_each(|(v, f)| *v *= f);
    Ok(LatticeField {
        length: field.length,
        t: field.t + params.dt,
        values,
    })
}
