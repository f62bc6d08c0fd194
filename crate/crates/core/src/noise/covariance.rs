use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Fourier table of a smooth spatial covariance `R` on the torus of side `L`.
///
/// Coefficients follow `ĝ(k) = L^{-d/2} ∫ g(x) e^{-i2πk·x/L} dx`, so that
/// `R(x) = L^{-d/2} Σ_k R̂(k) e^{i2πk·x/L}` and `∫R = 1` forces `R̂(0) = L^{-d/2}`.
///
/// In `d = 1`, `rhat[k]` is the coefficient of the modes `±k`. For `d ≥ 2` the
/// covariance is taken isotropic and `rhat[s]` is the coefficient shared by every
/// lattice frequency with `|k|² = s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceSpec {
    pub d: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub rhat: Vec<f64>,
}

impl CovarianceSpec {
    /// Builds a table from the non-zero modes, fixing the zero mode by `∫R = 1`.
    pub fn with_unit_mass(d: usize, length: f64, nonzero: &[f64]) -> Result<Self> {
        let mut rhat = Vec::with_capacity(nonzero.len() + 1);
        rhat.push(length.powf(-(d as f64) / 2.0));
        rhat.extend_from_slice(nonzero);
        let spec = Self { d, length, rhat };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(invalid("d", "dimension must be >= 1"));
        }
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(invalid(
                "L",
                format!("must be positive, got {}", self.length),
            ));
        }
        if self.rhat.is_empty() {
            return Err(invalid("rhat", "empty coefficient table"));
        }
        if let Some((k, v)) = self
            .rhat
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(invalid(
                "rhat",
                format!("coefficient {k} = {v} is not a finite nonnegative number"),
            ));
        }
        let zero = self.length.powf(-(self.d as f64) / 2.0);
        if (self.rhat[0] - zero).abs() > 1e-9 * zero {
            return Err(invalid(
                "rhat",
                format!(
                    "zero mode {} inconsistent with unit mass (expected {zero})",
                    self.rhat[0]
                ),
            ));
        }
        Ok(())
    }

    /// Largest tabulated `|k|` (d = 1).
    pub fn k_max(&self) -> usize {
        self.rhat.len() - 1
    }

    /// `R̂(k)` for an integer frequency vector, zero beyond the table.
    pub fn coefficient(&self, k: &[i64]) -> f64 {
        let idx = if self.d == 1 {
            k[0].unsigned_abs() as usize
        } else {
            k.iter().map(|c| (c * c) as usize).sum()
        };
        self.rhat.get(idx).copied().unwrap_or(0.0)
    }

    pub(crate) fn require_1d(&self) -> Result<()> {
        if self.d != 1 {
            return Err(Error::InvalidGrid(format!(
                "lattice simulation is one-dimensional, covariance has d = {}",
                self.d
            )));
        }
        Ok(())
    }

    /// `R(x)` in d = 1.
    pub fn r_at(&self, x: f64) -> f64 {
        let l = self.length;
        let tail: f64 = self
            .rhat
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| 2.0 * c * (2.0 * PI * k as f64 * x / l).cos())
            .sum();
        (self.rhat[0] + tail) / l.sqrt()
    }

    pub fn r0(&self) -> f64 {
        self.r_at(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_validation() {
        let spec =
            CovarianceSpec::from_json_str(r#"{"d":1,"L":1.0,"rhat":[1.0,0.5,0.25]}"#).unwrap();
        assert_eq!(spec.k_max(), 2);
        assert!((spec.r0() - 2.5).abs() < 1e-15);
        assert!(CovarianceSpec::from_json_str(r#"{"d":1,"L":1.0,"rhat":[1.0,-0.5]}"#).is_err());
        assert!(CovarianceSpec::from_json_str(r#"{"d":1,"L":4.0,"rhat":[1.0]}"#).is_err());
        assert!(CovarianceSpec::from_json_str(r#"{"d":1,"L":1.0,"rhat":[1.0],"x":1}"#).is_err());
        let s4 = CovarianceSpec::with_unit_mass(1, 4.0, &[0.1]).unwrap();
        assert!((s4.rhat[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unit_mass_of_r() {
        let spec = CovarianceSpec::with_unit_mass(1, 2.0, &[0.3, 0.1]).unwrap();
        let m = 4096;
        let dx = spec.length / m as f64;
        let mass: f64 = (0..m).map(|i| spec.r_at(i as f64 * dx)).sum::<f64>() * dx;
        assert!((mass - 1.0).abs() < 1e-12);
    }
}
