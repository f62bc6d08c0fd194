use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::noise::{CovarianceSpec, NoiseKind};

/// Smallest admissible `dt / dx²`; at 1 the lattice kernel's variance is off by ~2e-7.
pub const MIN_COURANT: f64 = 1.0;

/// Discretization and model parameters of one SHE run.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverParams {
    pub beta: f64,
    pub length: f64,
    pub n: usize,
    pub dt: f64,
    pub noise: NoiseKind,
    pub horizon: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            length: 1.0,
            n: 128,
            dt: 1e-3,
            noise: NoiseKind::White,
            horizon: 10.0,
        }
    }
}

impl SolverParams {
    pub fn white(beta: f64, length: f64, n: usize, dt: f64, horizon: f64) -> Self {
        Self {
            beta,
            length,
            n,
            dt,
            noise: NoiseKind::White,
            horizon,
        }
    }

    pub fn smooth(beta: f64, spec: CovarianceSpec, n: usize, dt: f64, horizon: f64) -> Self {
        Self {
            beta,
            length: spec.length,
            n,
            dt,
            noise: NoiseKind::Smooth(std::sync::Arc::new(spec)),
            horizon,
        }
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Number of steps needed to reach `t` from 0.
    pub fn steps_to(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }

    /// Variance of one noise increment at a grid point.
    pub fn cell_variance(&self) -> f64 {
        match &self.noise {
            NoiseKind::White => self.dt / self.dx(),
            NoiseKind::Smooth(spec) => self.dt * spec.r0(),
        }
    }

    /// `dt / dx²`. Below [`MIN_COURANT`] the lattice heat kernel no longer
    /// resolves the Gaussian and loses variance.
    pub fn courant(&self) -> f64 {
        self.dt / (self.dx() * self.dx())
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn with_horizon(&self, horizon: f64) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(invalid("beta", format!("must be >= 0, got {}", self.beta)));
        }
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(invalid(
                "L",
                format!("must be positive, got {}", self.length),
            ));
        }
        if self.n < 4 {
            return Err(crate::error::Error::InvalidGrid(format!(
                "need n >= 4, got {}",
                self.n
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if self.courant() < MIN_COURANT * (1.0 - 1e-12) {
            return Err(invalid(
                "dt",
                format!(
                    "dt/dx^2 = {:.3} < {MIN_COURANT}: refine dt only together with dx",
                    self.courant()
                ),
            ));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(invalid("T", format!("must be >= 0, got {}", self.horizon)));
        }
        if let NoiseKind::Smooth(spec) = &self.noise {
            spec.validate()?;
            spec.require_1d()?;
            if (spec.length - self.length).abs() > 1e-12 * self.length {
                return Err(invalid(
                    "L",
                    format!(
                        "covariance is on L = {}, solver on {}",
                        spec.length, self.length
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Serializable summary of the parameters for result records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsSummary {
    pub beta: f64,
    pub length: f64,
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
    pub noise: String,
}

impl From<&SolverParams> for ParamsSummary {
    fn from(p: &SolverParams) -> Self {
        let noise = match &p.noise {
            NoiseKind::White => "white".to_string(),
            NoiseKind::Smooth(spec) => format!("smooth(kmax={})", spec.k_max()),
        };
        Self {
            beta: p.beta,
            length: p.length,
            n: p.n,
            dt: p.dt,
            horizon: p.horizon,
            noise,
        }
    }
}
