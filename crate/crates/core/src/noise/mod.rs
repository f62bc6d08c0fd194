//! Random streams, Brownian bridges, stationary densities and space-time
//! noise increments.

mod bridge;
mod covariance;
mod rng;
mod slice;

pub use bridge::{
    fill_bridge, sample_bridge, sample_stationary_density, stationary_density_from_bridge,
    BridgePath,
};
pub use covariance::CovarianceSpec;
pub use rng::{RngStream, StreamRng};
pub use slice::{
    coarsen_white, fill_white, sample_smooth_slice, sample_white_slice, NoiseKind, NoiseSlice,
    SmoothSynth,
};
