//! Density of `Y_λ = ∫_0^1 e^{λW(x)} dx` for a standard bridge `W`:
//!
//! `f_λ(z) = 4/(πλ²z²) · e^{2π²/λ² − 4/(λ²z)} ∫_0^∞ e^{−2y²/λ² − 4 cosh y/(λ²z)} sinh y sin(4πy/λ²) dy`.
//!
//! The prefactor `e^{2π²/λ²}` multiplies an integral that is smaller by the same
//! order, so the `y` integral is carried out in multiprecision (MPFR). The
//! integrand is even and entire, hence the trapezoid rule converges
//! geometrically once the oscillation is resolved.

use std::f64::consts::PI;

use rug::float::Constant;
use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Trapezoid nodes per oscillation period `λ²/2` of `sin(4πy/λ²)`.
    pub nodes_per_period: usize,
    /// Upper bound on the `y` step.
    pub max_y_step: f64,
    /// Extra e-folds of Gaussian decay beyond the `e^{2π²/λ²}` cancellation at the `y` cutoff.
    pub tail_efolds: f64,
    /// `u = ln z` trapezoid step.
    pub u_step: f64,
    /// Density is dropped where the `e^{−4/(λ²z)}` factor is below `e^{−u_low_efolds}`.
    pub u_low_efolds: f64,
    /// Upper `u` cutoff in units of `λ`: bridge maxima have Gaussian tails `e^{−2u²/λ²}`.
    pub u_high_lambdas: f64,
    /// Self-convergence tolerance on the normalization when halving both steps.
    pub tolerance: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_per_period: 20,
            max_y_step: 0.01,
            tail_efolds: 100.0,
            u_step: 0.04,
            u_low_efolds: 120.0,
            u_high_lambdas: 7.0,
            tolerance: 1e-9,
        }
    }
}

impl QuadratureSpec {
    pub fn refined(&self) -> Self {
        Self {
            nodes_per_period: self.nodes_per_period * 2,
            max_y_step: self.max_y_step / 2.0,
            u_step: self.u_step / 2.0,
            ..*self
        }
    }
}

/// Precomputed `y` nodes for one `λ`.
pub struct YorQuadrature {
    lambda: f64,
    prec: u32,
    /// `h · e^{−2y²/λ²} sinh y sin(4πy/λ²)`.
    weights: Vec<Float>,
    /// `4(1 + cosh y)/λ²`.
    decay: Vec<Float>,
    /// `2π²/λ²`.
    shift: Float,
}

impl YorQuadrature {
    pub fn new(lambda: f64, spec: &QuadratureSpec) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(invalid("lambda", format!("must be positive, got {lambda}")));
        }
        let l2 = lambda * lambda;
        let cancel = 2.0 * PI * PI / l2;
        // Room for the cancellation plus ~40 significant digits.
        let prec = 96 + ((cancel + spec.tail_efolds) / std::f64::consts::LN_2).ceil() as u32;
        let h = (0.5 * l2 / spec.nodes_per_period as f64).min(spec.max_y_step);
        // e^{−2y²/λ²} sinh y < e^{−cancel − tail}: 2y²/λ² − y ≥ cancel + tail.
        let c = cancel + spec.tail_efolds;
        let y_max = (l2 / 4.0 + (l2 * l2 / 16.0 + 2.0 * l2 * c).sqrt()) / 2.0 + 1.0;
        let count = (y_max / h).ceil() as usize;
        let pi = Float::with_val(prec, Constant::Pi);
        let lam = Float::with_val(prec, lambda);
        let lam2 = Float::with_val(prec, &lam * &lam);
        let hh = Float::with_val(prec, h);
        let freq = Float::with_val(prec, 4 * &pi) / &lam2;
        let mut weights = Vec::with_capacity(count);
        let mut decay = Vec::with_capacity(count);
        for i in 1..=count {
            let y = Float::with_val(prec, &hh * i as u32);
            let gauss = (Float::with_val(prec, -2 * y.clone().pow(2u32)) / &lam2).exp();
            let osc = Float::with_val(prec, &freq * &y).sin();
            let w = Float::with_val(prec, &hh * gauss) * y.clone().sinh() * osc;
            weights.push(w);
            decay.push(Float::with_val(prec, 4 * (y.cosh() + 1u32)) / &lam2);
        }
        let shift = Float::with_val(prec, 2 * pi.pow(2u32)) / &lam2;
        Ok(Self {
            lambda,
            prec,
            weights,
            decay,
            shift,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn nodes(&self) -> usize {
        self.weights.len()
    }

    /// `f_λ(z)`.
    pub fn density(&self, z: f64) -> f64 {
        if !(z > 0.0) {
            return 0.0;
        }
        let prec = self.prec;
        let inv_z = Float::with_val(prec, 1.0 / z);
        // `decay` increases with y; once the exponent is below the working
        // precision the remaining terms are invisible.
        let floor = -(prec as f64) * std::f64::consts::LN_2 - 10.0;
        let mut sum = Float::with_val(prec, 0);
        for (w, d) in self.weights.iter().zip(&self.decay) {
            let e = Float::with_val(prec, &self.shift - Float::with_val(prec, d * &inv_z));
            if e.to_f64() < floor {
                break;
            }
            sum += Float::with_val(prec, w * e.exp());
        }
        let l2 = self.lambda * self.lambda;
        sum.to_f64() * 4.0 / (PI * l2 * z * z)
    }
}

/// `∫_0^∞ z^p f_λ(z) dz` for each `p`, by the trapezoid rule in `u = ln z`.
pub fn yor_moments(lambda: f64, powers: &[f64], spec: &QuadratureSpec) -> Result<Vec<f64>> {
    let quad = YorQuadrature::new(lambda, spec)?;
    let l2 = lambda * lambda;
    let u_lo = (4.0 / (l2 * spec.u_low_efolds)).ln();
    let u_hi = spec.u_high_lambdas * lambda + 1.0;
    let count = ((u_hi - u_lo) / spec.u_step).ceil() as usize;
    let du = (u_hi - u_lo) / count as f64;
    let mut acc = vec![0.0; powers.len()];
    for k in 0..=count {
        let u = u_lo + k as f64 * du;
        let z = u.exp();
        let f = quad.density(z);
        let w = if k == 0 || k == count { 0.5 * du } else { du };
        for (a, p) in acc.iter_mut().zip(powers) {
            *a += w * f * ((p + 1.0) * u).exp();
        }
    }
    Ok(acc)
}

/// Moments with a self-convergence check: halving every step must move the
/// normalization by less than `spec.tolerance`.
pub fn yor_moments_checked(lambda: f64, powers: &[f64], spec: &QuadratureSpec) -> Result<Vec<f64>> {
    let mut with_mass = vec![0.0];
    with_mass.extend_from_slice(powers);
    let coarse = yor_moments(lambda, &with_mass, spec)?;
    let fine = yor_moments(lambda, &with_mass, &spec.refined())?;
    for (c, f) in coarse.iter().zip(&fine) {
        if (c - f).abs() > spec.tolerance * f.abs().max(1.0) {
            return Err(Error::Quadrature(format!(
                "lambda = {lambda}: refinement moved a moment from {c} to {f}"
            )));
        }
    }
    Ok(fine[1..].to_vec())
}

/// `f_λ(z)` with a step-halving self-convergence check at `z`.
pub fn yor_density(lambda: f64, z: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(z > 0.0) {
        return Err(invalid("z", format!("must be positive, got {z}")));
    }
    let coarse = YorQuadrature::new(lambda, spec)?.density(z);
    let fine = YorQuadrature::new(lambda, &spec.refined())?.density(z);
    if (coarse - fine).abs() > spec.tolerance * fine.abs().max(1e-30) {
        return Err(Error::Quadrature(format!(
            "f_{lambda}({z}): {coarse} vs refined {fine}"
        )));
    }
    Ok(fine)
}
