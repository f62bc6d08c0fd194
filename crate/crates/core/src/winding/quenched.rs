use serde::{Deserialize, Serialize};

use super::chain::WindingChain;
use crate::error::{Error, Result};

/// Sectors whose mass falls below this fraction of the total are dropped from the edges.
pub const SECTOR_AUDIT_FLOOR: f64 = 1e-18;

/// Quenched law of the endpoint on the line, resolved by winding sector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuenchedLaw {
    /// Winding number of `probabilities[0]`.
    pub first_sector: i64,
    /// `P[Y_{N+1} = j]`.
    pub probabilities: Vec<f64>,
    /// Mass before normalization relative to the chain's own normalization (1 up to truncation).
    pub total_mass: f64,
    /// Quenched mean and variance of the winding number `Y_{N+1}`.
    pub winding_mean: f64,
    pub winding_variance: f64,
    /// Quenched mean and variance of the endpoint `Y L + x_{N+1}`.
    pub mean: f64,
    pub variance: f64,
}

impl QuenchedLaw {
    pub fn sectors(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, p)| (self.first_sector + i as i64, *p))
    }
}

/// Exact summation over sectors and grid positions:
/// `A_k(j, x) = Σ_{j', x'} Z_k(x + (j − j')L, x') A_{k−1}(j', x') dx`,
/// started from `ν₂` in sector 0 and closed with `ν₁`.
pub fn quenched_moments(chain: &WindingChain) -> Result<QuenchedLaw> {
    let n = chain.n();
    let dx = chain.dx();
    let length = chain.length();
    let mut first: i64 = 0;
    let mut state: Vec<Vec<f64>> = vec![chain.forward[0].clone()];
    // Running normalization keeps the state O(1); it is the same factor as the forward vectors'.
    for link in &chain.links.kernels {
        let jm = link.j_max as i64;
        let mut next = vec![vec![0.0; n]; state.len() + 2 * link.j_max];
        for (s, a) in state.iter().enumerate() {
            for d in -jm..=jm {
                let kernel = link.sector(d);
                let out = &mut next[(s as i64 + d + jm) as usize];
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &kernel[i * n..(i + 1) * n];
                    *o += dx * row.iter().zip(a).map(|(k, v)| k * v).sum::<f64>();
                }
            }
        }
        first -= jm;
        let mass: f64 = next.iter().flatten().sum::<f64>() * dx;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Domain(format!(
                "quenched recursion lost its mass ({mass})"
            )));
        }
        next.iter_mut().flatten().for_each(|v| *v /= mass);
        let sector_mass = |v: &Vec<f64>| v.iter().sum::<f64>() * dx;
        let lo = next
            .iter()
            .position(|v| sector_mass(v) > SECTOR_AUDIT_FLOOR)
            .unwrap_or(0);
        let hi = next
            .iter()
            .rposition(|v| sector_mass(v) > SECTOR_AUDIT_FLOOR)
            .unwrap_or(next.len() - 1);
        first += lo as i64;
        state = next.drain(lo..=hi).collect();
    }
    let weights: Vec<Vec<f64>> = state
        .iter()
        .map(|a| {
            a.iter()
                .zip(&chain.boundary.terminal)
                .map(|(v, w)| v * w * dx)
                .collect()
        })
        .collect();
    let total: f64 = weights.iter().flatten().sum();
    let reference: f64 = chain
        .forward
        .last()
        .unwrap()
        .iter()
        .zip(&chain.boundary.terminal)
        .map(|(f, w)| f * w * dx)
        .sum();
    let probabilities: Vec<f64> = weights
        .iter()
        .map(|w| w.iter().sum::<f64>() / total)
        .collect();
    let (mut m1, mut m2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    for (s, w) in weights.iter().enumerate() {
        let j = (first + s as i64) as f64;
        let p: f64 = w.iter().sum::<f64>() / total;
        y1 += j * p;
        y2 += j * j * p;
        for (i, wi) in w.iter().enumerate() {
            let x = j * length + i as f64 * dx;
            m1 += x * wi / total;
            m2 += x * x * wi / total;
        }
    }
    Ok(QuenchedLaw {
        first_sector: first,
        probabilities,
        total_mass: total / reference,
        winding_mean: y1,
        winding_variance: (y2 - y1 * y1).max(0.0),
        mean: m1,
        variance: (m2 - m1 * m1).max(0.0),
    })
}
