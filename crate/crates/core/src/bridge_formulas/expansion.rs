use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::noise::CovarianceSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaExpansion {
    pub gamma2: f64,
    pub gamma4: f64,
    /// Geometric extrapolation of the discarded table shells `|n|_∞ > n_max`.
    pub tail_bound: f64,
}

/// Relative size of the extrapolated tail that is still accepted.
pub const EXPANSION_TAIL_TOLERANCE: f64 = 1e-8;

/// Small-β coefficients `γ_L ≈ γ⁽²⁾β² + γ⁽⁴⁾β⁴` for a smooth covariance.
///
/// The γ⁽⁴⁾ sum is written with the unnormalized transform
/// `∫ R e^{−i2πξ·x} dx` at `ξ = n/L`, which is `L^{d/2}` times the table entry.
pub fn gamma_expansion_smooth(
    length: f64,
    d: usize,
    spec: &CovarianceSpec,
    n_max: usize,
) -> Result<GammaExpansion> {
    spec.validate()?;
    if spec.d != d || (spec.length - length).abs() > 1e-12 * length {
        return Err(invalid(
            "spec",
            format!(
                "covariance is for (d={}, L={}), asked (d={d}, L={length})",
                spec.d, spec.length
            ),
        ));
    }
    let covered = if d == 1 {
        spec.k_max()
    } else {
        ((spec.rhat.len() - 1) as f64 / d as f64).sqrt().floor() as usize
    };
    if n_max == 0 || n_max > covered {
        return Err(invalid(
            "n_max",
            format!("table covers |n| <= {covered}, asked {n_max}"),
        ));
    }
    let df = d as f64;
    let scale = length.powf(df / 2.0);
    let mut shells = vec![0.0; n_max + 1];
    let mut idx = vec![-(n_max as i64); d];
    loop {
        let norm2: i64 = idx.iter().map(|c| c * c).sum();
        if norm2 > 0 {
            let shell = idx
                .iter()
                .map(|c| c.unsigned_abs() as usize)
                .max()
                .unwrap_or(0);
            let r = scale * spec.coefficient(&idx);
            shells[shell] += r * r / norm2 as f64;
        }
        // Odometer over the cube |n|_∞ ≤ n_max.
        let mut k = 0;
        while k < d {
            idx[k] += 1;
            if idx[k] <= n_max as i64 {
                break;
            }
            idx[k] = -(n_max as i64);
            k += 1;
        }
        if k == d {
            break;
        }
    }
    let sum: f64 = shells.iter().sum();
    let prefactor = -1.0 / (8.0 * PI * PI * length.powf(2.0 * df - 2.0));
    let last = shells[n_max];
    // Shells past the table are zero; the tail only matters when the table is cut.
    let tail = if last == 0.0 || n_max == covered {
        0.0
    } else if n_max >= 2 && shells[n_max - 1] > 0.0 && last < shells[n_max - 1] {
        let r = last / shells[n_max - 1];
        last * r / (1.0 - r)
    } else {
        f64::INFINITY
    };
    let tail_bound = (prefactor * tail).abs();
    let gamma4 = prefactor * sum;
    if tail_bound > EXPANSION_TAIL_TOLERANCE * gamma4.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Truncation(format!(
            "gamma4 tail estimate {tail_bound:.3e} exceeds tolerance"
        )));
    }
    Ok(GammaExpansion {
        gamma2: -0.5 / length.powf(df),
        gamma4,
        tail_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_shell_by_hand() {
        let c = 0.3;
        let spec = CovarianceSpec::with_unit_mass(1, 1.0, &[c]).unwrap();
        let g = gamma_expansion_smooth(1.0, 1, &spec, 1).unwrap();
        assert!((g.gamma4 + 2.0 * c * c / (8.0 * PI * PI)).abs() < 1e-16);
        assert_eq!(g.gamma2, -0.5);
        assert_eq!(g.tail_bound, 0.0);
    }
}
