//! Stochastic heat equation on the torus: Lie splitting of the exact spectral
//! heat flow and an Itô-compensated exponential noise factor.

mod heat;
pub mod io;
mod kernel;
mod params;
mod solver;

pub use heat::{HeatPropagator, POSITIVITY_FLOOR};
pub(crate) use kernel::covering_unchecked;
pub use kernel::{
    covering, default_sector_count, greens, CoveringKernel, GreensKernel, COVERING_HARD_TOLERANCE,
};
pub use params::{ParamsSummary, SolverParams, MIN_COURANT};
pub(crate) use solver::NoiseSource;
pub use solver::{step, Solver, SpaceTimeNoise, StepRecord};

use crate::error::Result;
use crate::field::LatticeField;

/// Output of [`solve`]: snapshots at the requested times and a record of every step.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub initial_log_mass: f64,
    pub steps: Vec<StepRecord>,
    pub snapshots: Vec<LatticeField>,
}

impl Trajectory {
    /// `(t, Z̄_t)` including `t = 0`.
    pub fn masses(&self) -> Vec<(f64, f64)> {
        std::iter::once((0.0, self.initial_log_mass.exp()))
            .chain(self.steps.iter().map(|s| (s.t, s.log_mass.exp())))
            .collect()
    }
}

/// Evolves `z0` to `params.horizon`, snapshotting at the steps nearest to `record_times`.
pub fn solve(
    z0: &LatticeField,
    params: &SolverParams,
    noise: &SpaceTimeNoise,
    record_times: &[f64],
) -> Result<Trajectory> {
    let mut solver = Solver::new(params, z0)?;
    let total = params.steps_to(params.horizon) as u64;
    let mut marks: Vec<u64> = record_times
        .iter()
        .map(|t| params.steps_to(*t) as u64)
        .filter(|k| *k <= total)
        .collect();
    marks.sort_unstable();
    marks.dedup();
    let mut snapshots = Vec::with_capacity(marks.len());
    let mut next = marks.iter().peekable();
    while next.peek() == Some(&&0) {
        snapshots.push(solver.field());
        next.next();
    }
    let mut steps = Vec::with_capacity(total as usize);
    let initial_log_mass = solver.log_mass();
    for _ in 0..total {
        steps.push(solver.advance(noise)?);
        while next.peek() == Some(&&solver.step_index()) {
            snapshots.push(solver.field());
            next.next();
        }
    }
    Ok(Trajectory {
        initial_log_mass,
        steps,
        snapshots,
    })
}
