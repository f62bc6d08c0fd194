use super::heat::HeatPropagator;
use super::params::SolverParams;
use super::solver::{NoiseSource, SpaceTimeNoise};
use crate::error::{invalid, Error, Result};

/// `K[i][j] ≈ G_{t,s}(x_i, y_j)`, stored row-major; `K·dx` acts as the integral operator.
#[derive(Clone, Debug, PartialEq)]
pub struct GreensKernel {
    pub s: f64,
    pub t: f64,
    pub n: usize,
    pub length: f64,
    pub data: Vec<f64>,
}

impl GreensKernel {
    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `(K dx) v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n)
            .map(|i| dx * self.row(i).iter().zip(v).map(|(k, x)| k * x).sum::<f64>())
            .collect()
    }

    /// `(K dx)ᵀ v`.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let dx = self.dx();
        let mut out = vec![0.0; self.n];
        for (i, vi) in v.iter().enumerate() {
            for (o, k) in out.iter_mut().zip(self.row(i)) {
                *o += dx * k * vi;
            }
        }
        out
    }

    /// `K(t,u) · dx · K(u,s)` for `self = K(t,u)`.
    pub fn compose(&self, earlier: &GreensKernel) -> Result<GreensKernel> {
        if self.n != earlier.n || (earlier.t - self.s).abs() > 1e-9 {
            return Err(Error::GridMismatch("kernels do not chain".into()));
        }
        let n = self.n;
        let dx = self.dx();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            let out = &mut data[i * n..(i + 1) * n];
            for (u, a) in self.row(i).iter().enumerate() {
                let w = a * dx;
                for (o, b) in out.iter_mut().zip(earlier.row(u)) {
                    *o += w * b;
                }
            }
        }
        Ok(GreensKernel {
            s: earlier.s,
            t: self.t,
            n,
            length: self.length,
            data,
        })
    }
}

/// `Kj[j][i][k] ≈ Z_{t,s}(x_i + jL, y_k)` for `|j| ≤ J`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoveringKernel {
    pub s: f64,
    pub t: f64,
    pub j_max: usize,
    pub n: usize,
    pub length: f64,
    pub data: Vec<f64>,
    /// Largest fraction of a column's mass found in the outermost sectors `|j| = J`.
    pub truncation_mass: f64,
}

impl CoveringKernel {
    pub fn sectors(&self) -> usize {
        2 * self.j_max + 1
    }

    pub fn get(&self, j: i64, i: usize, k: usize) -> f64 {
        let sector = (j + self.j_max as i64) as usize;
        self.data[(sector * self.n + i) * self.n + k]
    }

    pub fn sector(&self, j: i64) -> &[f64] {
        let sector = (j + self.j_max as i64) as usize;
        let nn = self.n * self.n;
        &self.data[sector * nn..(sector + 1) * nn]
    }

    /// `Σ_j Kj[j]`, the periodic kernel.
    pub fn periodic_sum(&self) -> GreensKernel {
        let nn = self.n * self.n;
        let mut data = vec![0.0; nn];
        for chunk in self.data.chunks_exact(nn) {
            data.iter_mut().zip(chunk).for_each(|(d, c)| *d += c);
        }
        GreensKernel {
            s: self.s,
            t: self.t,
            n: self.n,
            length: self.length,
            data,
        }
    }

    pub fn check_truncation(&self, tol: f64) -> Result<()> {
        if self.truncation_mass > tol {
            Err(Error::Truncation(format!(
                "outermost winding sectors |j| = {} carry mass fraction {:.3e} > {tol:.1e}",
                self.j_max, self.truncation_mass
            )))
        } else {
            Ok(())
        }
    }
}

/// Smallest `J` with Gaussian tail mass below `1e-12` for an interval of length `tau`.
pub fn default_sector_count(tau: f64, length: f64) -> usize {
    // P(|N(0,1)| > 7.13) ≈ 1e-12; one extra sector covers the starting cell's offset.
    (7.13 * tau.sqrt() / length).ceil() as usize + 1
}

/// Hard limit for [`covering`]: beyond this the sector decomposition is unusable.
pub const COVERING_HARD_TOLERANCE: f64 = 1e-6;

fn step_range(s: f64, t: f64, params: &SolverParams) -> Result<(u64, u64)> {
    params.validate()?;
    if !(t > s) || s < 0.0 {
        return Err(invalid("t", format!("need 0 <= s < t, got s={s}, t={t}")));
    }
    let k0 = params.steps_to(s) as u64;
    let k1 = params.steps_to(t) as u64;
    if k1 <= k0 {
        return Err(invalid(
            "t",
            format!("interval [{s}, {t}] shorter than one step"),
        ));
    }
    Ok((k0, k1))
}

/// Evolves `δ_{y_j}` for every column `j` under one noise realization.
pub fn greens(
    s: f64,
    t: f64,
    params: &SolverParams,
    noise: &SpaceTimeNoise,
) -> Result<GreensKernel> {
    let (k0, k1) = step_range(s, t, params)?;
    let n = params.n;
    let dx = params.dx();
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut c = vec![0.0; n];
            c[j] = 1.0 / dx;
            c
        })
        .collect();
    let mut heat = HeatPropagator::new(n, params.length, params.dt);
    let mut source = NoiseSource::new(params)?;
    let mut factors = vec![0.0; n];
    for k in k0..k1 {
        source.draw_step(noise, k, params.dt)?;
        source.factors(&mut factors);
        for c in cols.iter_mut() {
            heat.apply(c);
            c.iter_mut().zip(&factors).for_each(|(v, f)| *v *= f);
        }
    }
    let mut data = vec![0.0; n * n];
    for (j, c) in cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            data[i * n + j] = *v;
        }
    }
    Ok(GreensKernel {
        s,
        t,
        n,
        length: params.length,
        data,
    })
}

/// Solves on `[−JL, (J+1)L)` with the periodically extended noise and slices into sectors.
pub fn covering(
    s: f64,
    t: f64,
    j_max: usize,
    params: &SolverParams,
    noise: &SpaceTimeNoise,
) -> Result<CoveringKernel> {
    let kernel = covering_unchecked(s, t, j_max, params, noise)?;
    kernel.check_truncation(COVERING_HARD_TOLERANCE)?;
    Ok(kernel)
}

pub(crate) fn covering_unchecked(
    s: f64,
    t: f64,
    j_max: usize,
    params: &SolverParams,
    noise: &SpaceTimeNoise,
) -> Result<CoveringKernel> {
    let (k0, k1) = step_range(s, t, params)?;
    let n = params.n;
    let sectors = 2 * j_max + 1;
    let m = sectors * n;
    let dx = params.dx();
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut c = vec![0.0; m];
            c[j_max * n + k] = 1.0 / dx;
            c
        })
        .collect();
    let mut heat = HeatPropagator::new(m, sectors as f64 * params.length, params.dt);
    let mut source = NoiseSource::new(params)?;
    let mut base = vec![0.0; n];
    for step in k0..k1 {
        source.draw_step(noise, step, params.dt)?;
        source.factors(&mut base);
        for c in cols.iter_mut() {
            heat.apply(c);
            for chunk in c.chunks_exact_mut(n) {
                chunk.iter_mut().zip(&base).for_each(|(v, f)| *v *= f);
            }
        }
    }
    let nn = n * n;
    let mut data = vec![0.0; sectors * nn];
    let mut truncation_mass: f64 = 0.0;
    for (k, c) in cols.iter().enumerate() {
        let total: f64 = c.iter().sum();
        let outer: f64 = c[..n].iter().chain(&c[m - n..]).sum();
        truncation_mass = truncation_mass.max(outer / total);
        for sector in 0..sectors {
            for i in 0..n {
                data[sector * nn + i * n + k] = c[sector * n + i];
            }
        }
    }
    Ok(CoveringKernel {
        s,
        t,
        j_max,
        n,
        length: params.length,
        data,
        truncation_mass,
    })
}
