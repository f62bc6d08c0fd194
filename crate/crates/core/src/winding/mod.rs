//! Winding number of the polymer on the cylinder: the sector-resolved Markov
//! chain built from covering kernels, exact quenched laws and empirical
//! diffusivities.

mod chain;
mod quenched;
mod sigma;

pub use chain::{
    build_chain, build_links, sample_displacement, Boundary, BoundaryMeasures, DisplacementSample,
    WindingChain, WindingLinks, WINDING_TRUNCATION_TOLERANCE,
};
pub use quenched::{quenched_moments, QuenchedLaw, SECTOR_AUDIT_FLOOR};
pub use sigma::{
    mean_quenched_variance, run_environments, sigma_empirical, sigma_from_run, winding_clt,
    EnvironmentRecord, SigmaEmpirical, WindingRun, WindingRunConfig, DEFAULT_LAG_MAX,
    WINDOW_MARGIN,
};
