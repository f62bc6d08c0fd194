use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::LatticeField;

/// Brownian bridge on `[0, L]` sampled at `x_i = i L / n`, `i = 0..=n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgePath {
    pub length: f64,
    pub values: Vec<f64>,
}

impl BridgePath {
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n() as f64
    }

    /// Trapezoid rule for `∫_0^L e^{βW}`.
    pub fn exp_integral(&self, beta: f64) -> f64 {
        exp_integral(&self.values, beta, self.dx())
    }
}

pub(crate) fn exp_integral(values: &[f64], beta: f64, dx: f64) -> f64 {
    let n = values.len() - 1;
    let inner: f64 = values[1..n].iter().map(|w| (beta * w).exp()).sum();
    dx * (inner + 0.5 * ((beta * values[0]).exp() + (beta * values[n]).exp()))
}

fn check_grid(length: f64, n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidGrid(format!("bridge needs n >= 2, got {n}")));
    }
    if !(length > 0.0) || !length.is_finite() {
        return Err(Error::InvalidGrid(format!(
            "length must be positive, got {length}"
        )));
    }
    Ok(())
}

/// Random walk with linear endpoint correction into `values` (`len = n + 1`).
pub fn fill_bridge<R: Rng + ?Sized>(values: &mut [f64], length: f64, rng: &mut R) {
    let n = values.len() - 1;
    let sd = (length / n as f64).sqrt();
    values[0] = 0.0;
    let mut s = 0.0;
    for v in values[1..].iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        s += sd * g;
        *v = s;
    }
    let end = values[n];
    let inv_n = 1.0 / n as f64;
    for (i, v) in values.iter_mut().enumerate() {
        *v -= end * i as f64 * inv_n;
    }
    values[n] = 0.0;
}

pub fn sample_bridge<R: Rng + ?Sized>(length: f64, n: usize, rng: &mut R) -> Result<BridgePath> {
    check_grid(length, n)?;
    let mut values = vec![0.0; n + 1];
    fill_bridge(&mut values, length, rng);
    Ok(BridgePath { length, values })
}

/// `e^{βW} / ∫ e^{βW}` on the periodic grid (the endpoint `x = L` is identified with 0).
pub fn stationary_density_from_bridge(bridge: &BridgePath, beta: f64) -> LatticeField {
    let n = bridge.n();
    let top = bridge.values[..n]
        .iter()
        .fold(f64::NEG_INFINITY, |m, &w| m.max(beta * w));
    let mut values: Vec<f64> = bridge.values[..n]
        .iter()
        .map(|w| (beta * w - top).exp())
        .collect();
    let mass = values.iter().sum::<f64>() * bridge.dx();
    values.iter_mut().for_each(|v| *v /= mass);
    LatticeField {
        length: bridge.length,
        t: 0.0,
        values,
    }
}

pub fn sample_stationary_density<R: Rng + ?Sized>(
    beta: f64,
    length: f64,
    n: usize,
    rng: &mut R,
) -> Result<LatticeField> {
    if !(beta >= 0.0) {
        return Err(crate::error::invalid(
            "beta",
            format!("must be >= 0, got {beta}"),
        ));
    }
    let bridge = sample_bridge(length, n, rng)?;
    Ok(stationary_density_from_bridge(&bridge, beta))
}
