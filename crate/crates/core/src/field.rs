use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real field sampled on the uniform periodic grid `x_i = i L / n`, `i < n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeField {
    pub length: f64,
    pub t: f64,
    pub values: Vec<f64>,
}

impl LatticeField {
    pub fn new(length: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need n >= 2 cells, got {}",
                values.len()
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "length must be positive, got {length}"
            )));
        }
        Ok(Self {
            length,
            t: 0.0,
            values,
        })
    }

    pub fn constant(length: f64, n: usize, c: f64) -> Result<Self> {
        Self::new(length, vec![c; n])
    }

    pub fn from_fn(length: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dx = length / n as f64;
        Self::new(length, (0..n).map(|i| f(i as f64 * dx)).collect())
    }

    /// Mass `1/dx` in cell `cell`, zero elsewhere.
    pub fn delta(length: f64, n: usize, cell: usize) -> Result<Self> {
        let mut f = Self::constant(length, n, 0.0)?;
        if cell >= n {
            return Err(Error::InvalidGrid(format!(
                "cell {cell} outside grid of {n}"
            )));
        }
        f.values[cell] = n as f64 / length;
        Ok(f)
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn dx(&self) -> f64 {
        self.length / self.values.len() as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    /// Trapezoid (= rectangle, on the periodic grid) quadrature.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.n() == other.n() && (self.length - other.length).abs() <= 1e-12 * self.length
    }

    pub fn check_grid(&self, other: &Self) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(L={}, n={}) vs (L={}, n={})",
                self.length,
                self.n(),
                other.length,
                other.n()
            )))
        }
    }

    pub fn ensure_positive(&self) -> Result<()> {
        match self
            .values
            .iter()
            .position(|v| !(*v > 0.0) || !v.is_finite())
        {
            None => Ok(()),
            Some(i) => Err(Error::Domain(format!(
                "field value {} at cell {i} is not positive and finite",
                self.values[i]
            ))),
        }
    }
}
