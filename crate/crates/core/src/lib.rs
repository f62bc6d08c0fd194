//! Numerics for the stochastic heat equation and KPZ equation on a torus:
//! Brownian-bridge formulas for the Lyapunov exponent and fluctuation
//! variances, direct SPDE simulation, the endpoint-density process, and the
//! winding-number chain of the cylinder polymer.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge_formulas;
pub mod error;
pub mod field;
pub mod height;
pub mod noise;
pub mod parallel;
pub mod projective;
pub mod she;
pub mod stats;
pub mod winding;

pub use error::{Error, Result};
pub use field::LatticeField;
pub use stats::Estimate;
