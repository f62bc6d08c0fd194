use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::noise::{sample_stationary_density, RngStream};
use crate::projective::{DensityField, Measure};
use crate::she::{
    covering_unchecked, default_sector_count, CoveringKernel, GreensKernel, SolverParams,
    SpaceTimeNoise,
};

/// Outer-sector mass allowed in any link before the chain is rejected.
pub const WINDING_TRUNCATION_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Lebesgue measure at the terminal time, `δ₀` at time 0.
    LebesgueDelta,
    /// Two independent draws from the invariant measure.
    Stationary,
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lebesgue-delta" => Ok(Boundary::LebesgueDelta),
            "stationary" => Ok(Boundary::Stationary),
            other => Err(invalid("boundary", format!("unknown boundary {other:?}"))),
        }
    }
}

/// `ν₁` at the terminal time and `ν₂` at time 0, as densities on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryMeasures {
    pub terminal: Vec<f64>,
    pub initial: Vec<f64>,
}

impl BoundaryMeasures {
    pub fn lebesgue_delta(params: &SolverParams) -> Result<Self> {
        Ok(Self {
            terminal: Measure::Lebesgue.values(params.length, params.n)?,
            initial: Measure::Delta(0).values(params.length, params.n)?,
        })
    }

    pub fn stationary(params: &SolverParams, stream: &RngStream) -> Result<Self> {
        if !params.noise.is_white() {
            return Err(invalid(
                "boundary",
                "invariant-measure boundaries need white noise",
            ));
        }
        let draw = |k| {
            sample_stationary_density(
                params.beta,
                params.length,
                params.n,
                &mut stream.substream(k).rng(),
            )
        };
        Ok(Self {
            terminal: draw(0)?.values,
            initial: draw(1)?.values,
        })
    }

    pub fn new(kind: Boundary, params: &SolverParams, stream: &RngStream) -> Result<Self> {
        match kind {
            Boundary::LebesgueDelta => Self::lebesgue_delta(params),
            Boundary::Stationary => Self::stationary(params, stream),
        }
    }
}

/// Covering kernels of one environment for `[k−1, k]`, `k = 1..=N`, plus the
/// fractional link `[N, t]`. They do not depend on the boundary measures.
#[derive(Clone, Debug)]
pub struct WindingLinks {
    pub t: f64,
    pub intervals: usize,
    pub kernels: Vec<CoveringKernel>,
    pub periodic: Vec<GreensKernel>,
    pub truncation_mass: f64,
}

pub fn build_links(
    t: f64,
    params: &SolverParams,
    noise: &SpaceTimeNoise,
) -> Result<Arc<WindingLinks>> {
    params.validate()?;
    if t < 2.0 {
        return Err(invalid("t", format!("winding chain needs t >= 2, got {t}")));
    }
    let intervals = t.floor() as usize;
    let mut ends: Vec<(f64, f64)> = (1..=intervals)
        .map(|k| ((k - 1) as f64, k as f64))
        .collect();
    if params.steps_to(t) > params.steps_to(intervals as f64) {
        ends.push((intervals as f64, t));
    }
    let mut kernels = Vec::with_capacity(ends.len());
    let mut truncation_mass: f64 = 0.0;
    for (s, e) in ends {
        let link = covering_unchecked(
            s,
            e,
            default_sector_count(e - s, params.length),
            params,
            noise,
        )?;
        truncation_mass = truncation_mass.max(link.truncation_mass);
        link.check_truncation(WINDING_TRUNCATION_TOLERANCE)?;
        kernels.push(link);
    }
    let periodic = kernels.iter().map(|l| l.periodic_sum()).collect();
    Ok(Arc::new(WindingLinks {
        t,
        intervals,
        kernels,
        periodic,
        truncation_mass,
    }))
}

/// The winding-number chain of one environment: its links and the normalized
/// forward/backward vectors of the cylinder path measure for given boundaries.
#[derive(Clone, Debug)]
pub struct WindingChain {
    pub links: Arc<WindingLinks>,
    /// `forward[k]` is the law of `x_k` given the links up to `k` and `ν₂`.
    pub forward: Vec<Vec<f64>>,
    /// `backward[k]` is the normalized density of `ν₁` pulled back to time `k`.
    pub backward: Vec<Vec<f64>>,
    pub boundary: BoundaryMeasures,
}

fn normalized(mut v: Vec<f64>, dx: f64) -> Result<Vec<f64>> {
    let mass: f64 = v.iter().sum::<f64>() * dx;
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::Domain(format!("chain vector has mass {mass}")));
    }
    v.iter_mut().for_each(|x| *x /= mass);
    Ok(v)
}

/// Index drawn with probability proportional to `weights`.
pub(crate) fn draw_index<R: Rng + ?Sized>(
    weights: impl Iterator<Item = f64>,
    rng: &mut R,
) -> usize {
    let cumulative: Vec<f64> = weights
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let u = rng.random::<f64>() * cumulative.last().copied().unwrap_or(0.0);
    cumulative
        .partition_point(|c| *c <= u)
        .min(cumulative.len() - 1)
}

pub fn build_chain(
    t: f64,
    params: &SolverParams,
    boundary: BoundaryMeasures,
    noise: &SpaceTimeNoise,
) -> Result<WindingChain> {
    WindingChain::from_links(build_links(t, params, noise)?, boundary)
}

/// One draw of the two-stage sampler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementSample {
    /// `Y = Σ η_k`.
    pub winding: i64,
    pub etas: Vec<i64>,
    /// Grid positions `x_0, …, x_{N+1}` on the torus.
    pub cells: Vec<usize>,
    /// `Y L + x_{N+1}`, the endpoint on the line relative to the sector of `x_0`.
    pub endpoint: f64,
    /// `Y L + x_{N+1} − x_0`.
    pub displacement: f64,
}

impl WindingChain {
    pub fn from_links(links: Arc<WindingLinks>, boundary: BoundaryMeasures) -> Result<Self> {
        let (n, length) = (links.kernels[0].n, links.kernels[0].length);
        if boundary.terminal.len() != n || boundary.initial.len() != n {
            return Err(Error::GridMismatch(
                "boundary measures do not match the grid".into(),
            ));
        }
        let dx = length / n as f64;
        let mut forward = vec![normalized(boundary.initial.clone(), dx)?];
        for g in &links.periodic {
            let next = g.apply(forward.last().unwrap());
            forward.push(normalized(next, dx)?);
        }
        let mut backward = vec![normalized(boundary.terminal.clone(), dx)?];
        for g in links.periodic.iter().rev() {
            let next = g.apply_transpose(backward.last().unwrap());
            backward.push(normalized(next, dx)?);
        }
        backward.reverse();
        Ok(Self {
            links,
            forward,
            backward,
            boundary,
        })
    }

    pub fn t(&self) -> f64 {
        self.links.t
    }

    pub fn intervals(&self) -> usize {
        self.links.intervals
    }

    pub fn n(&self) -> usize {
        self.links.kernels[0].n
    }

    pub fn length(&self) -> f64 {
        self.links.kernels[0].length
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.n() as f64
    }

    /// `P[η_k = j | x_k = i, x_{k−1} = prev]` for `j = −J..=J` (`k` is 1-based).
    pub fn eta_law(&self, k: usize, i: usize, prev: usize) -> Vec<f64> {
        let link = &self.links.kernels[k - 1];
        let total = self.links.periodic[k - 1].get(i, prev);
        (-(link.j_max as i64)..=link.j_max as i64)
            .map(|j| link.get(j, i, prev) / total)
            .collect()
    }

    /// Marginal density of `x_k` under the path measure, `∝ ρ_b ρ_f`.
    pub fn marginal(&self, k: usize) -> Vec<f64> {
        let v: Vec<f64> = self.forward[k]
            .iter()
            .zip(&self.backward[k])
            .map(|(f, b)| f * b)
            .collect();
        let mass: f64 = v.iter().sum::<f64>() * self.dx();
        v.into_iter().map(|x| x / mass).collect()
    }

    pub fn marginal_field(&self, k: usize) -> Result<DensityField> {
        DensityField::from_density(crate::field::LatticeField::new(
            self.length(),
            self.marginal(k),
        )?)
    }

    /// Grid positions from the path measure by backward sampling.
    pub fn sample_cells<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let m = self.links.kernels.len();
        let mut cells = vec![0; m + 1];
        cells[m] = draw_index(
            self.boundary
                .terminal
                .iter()
                .zip(&self.forward[m])
                .map(|(a, b)| a * b),
            rng,
        );
        for k in (1..=m).rev() {
            let g = &self.links.periodic[k - 1];
            let row = g.row(cells[k]);
            cells[k - 1] = draw_index(
                row.iter().zip(&self.forward[k - 1]).map(|(a, b)| a * b),
                rng,
            );
        }
        cells
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DisplacementSample {
        let cells = self.sample_cells(rng);
        let etas: Vec<i64> = (1..=self.links.kernels.len())
            .map(|k| {
                let law = self.eta_law(k, cells[k], cells[k - 1]);
                draw_index(law.into_iter(), rng) as i64 - self.links.kernels[k - 1].j_max as i64
            })
            .collect();
        let winding: i64 = etas.iter().sum();
        let dx = self.dx();
        let endpoint = winding as f64 * self.length() + *cells.last().unwrap() as f64 * dx;
        DisplacementSample {
            winding,
            endpoint,
            displacement: endpoint - cells[0] as f64 * dx,
            etas,
            cells,
        }
    }
}

pub fn sample_displacement<R: Rng + ?Sized>(
    chain: &WindingChain,
    n_paths: usize,
    rng: &mut R,
) -> Vec<DisplacementSample> {
    (0..n_paths).map(|_| chain.sample(rng)).collect()
}
