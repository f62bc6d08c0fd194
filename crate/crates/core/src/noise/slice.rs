use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner};

use super::covariance::CovarianceSpec;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum NoiseKind {
    White,
    Smooth(Arc<CovarianceSpec>),
}

impl NoiseKind {
    pub fn is_white(&self) -> bool {
        matches!(self, NoiseKind::White)
    }
}

/// Space-time noise integrated over one time step: `increments[i] ≈ ∫_{t}^{t+dt} ξ(s, x_i) ds`.
#[derive(Clone, Debug)]
pub struct NoiseSlice {
    pub dt: f64,
    pub increments: Vec<f64>,
    pub kind: NoiseKind,
}

impl NoiseSlice {
    /// Variance of each increment, the Itô compensation of the multiplicative step.
    pub fn cell_variance(&self, dx: f64) -> f64 {
        match &self.kind {
            NoiseKind::White => self.dt / dx,
            NoiseKind::Smooth(spec) => self.dt * spec.r0(),
        }
    }
}

/// i.i.d. `N(0, var)` into `out`.
pub fn fill_white<R: Rng + ?Sized>(out: &mut [f64], var: f64, rng: &mut R) {
    let sd = var.sqrt();
    for v in out.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *v = sd * g;
    }
}

/// Cell averages of a white slice on a grid twice as coarse.
pub fn coarsen_white(fine: &[f64], coarse: &mut [f64]) {
    debug_assert_eq!(fine.len(), 2 * coarse.len());
    for (c, pair) in coarse.iter_mut().zip(fine.chunks_exact(2)) {
        *c = 0.5 * (pair[0] + pair[1]);
    }
}

pub fn sample_white_slice<R: Rng + ?Sized>(
    n: usize,
    dx: f64,
    dt: f64,
    rng: &mut R,
) -> Result<NoiseSlice> {
    if !(dt > 0.0) || !(dx > 0.0) {
        return Err(crate::error::invalid(
            "dt/dx",
            format!("must be positive, got dt={dt}, dx={dx}"),
        ));
    }
    let mut increments = vec![0.0; n];
    fill_white(&mut increments, dt / dx, rng);
    Ok(NoiseSlice {
        dt,
        increments,
        kind: NoiseKind::White,
    })
}

/// Spectral synthesis of a Gaussian field with covariance `dt·R` on an `n`-point grid.
pub struct SmoothSynth {
    n: usize,
    mode_sd: Vec<f64>,
    plan: Arc<dyn ComplexToReal<f64>>,
    spectrum: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl SmoothSynth {
    pub fn new(spec: &CovarianceSpec, n: usize) -> Result<Self> {
        spec.validate()?;
        spec.require_1d()?;
        if n < 2 || 2 * spec.k_max() >= n {
            return Err(Error::InvalidGrid(format!(
                "grid of {n} points cannot resolve covariance modes up to {}",
                spec.k_max()
            )));
        }
        let scale = spec.length.powf(-0.5);
        let mode_sd = spec.rhat.iter().map(|c| (scale * c).sqrt()).collect();
        let plan = RealFftPlanner::<f64>::new().plan_fft_inverse(n);
        let spectrum = plan.make_input_vec();
        let scratch = plan.make_scratch_vec();
        Ok(Self {
            n,
            mode_sd,
            plan,
            spectrum,
            scratch,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn fill<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R, out: &mut [f64]) -> Result<()> {
        let root_dt = dt.sqrt();
        self.spectrum
            .iter_mut()
            .for_each(|c| *c = Complex64::new(0.0, 0.0));
        let g: f64 = rng.sample(StandardNormal);
        self.spectrum[0] = Complex64::new(root_dt * self.mode_sd[0] * g, 0.0);
        for (k, sd) in self.mode_sd.iter().enumerate().skip(1) {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            let s = root_dt * sd * std::f64::consts::FRAC_1_SQRT_2;
            self.spectrum[k] = Complex64::new(s * a, s * b);
        }
        self.plan
            .process_with_scratch(&mut self.spectrum, out, &mut self.scratch)
            .map_err(|e| Error::Internal(format!("non-real spectral synthesis: {e}")))
    }
}

pub fn sample_smooth_slice<R: Rng + ?Sized>(
    spec: &CovarianceSpec,
    n: usize,
    dt: f64,
    rng: &mut R,
) -> Result<NoiseSlice> {
    if !(dt > 0.0) {
        return Err(crate::error::invalid(
            "dt",
            format!("must be positive, got {dt}"),
        ));
    }
    let mut synth = SmoothSynth::new(spec, n)?;
    let mut increments = vec![0.0; n];
    synth.fill(dt, rng, &mut increments)?;
    Ok(NoiseSlice {
        dt,
        increments,
        kind: NoiseKind::Smooth(Arc::new(spec.clone())),
    })
}
