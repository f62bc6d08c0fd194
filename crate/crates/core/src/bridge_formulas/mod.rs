//! Closed forms and Brownian-bridge evaluators for the Lyapunov exponent, the
//! height-fluctuation variance, the winding diffusivity, the small-β
//! expansion for smooth noise, and the explicit corrector.

mod closed;
mod corrector;
mod expansion;
mod mc;
mod yor;

pub use closed::{ey_minus2_closed, gamma_white_closed, gamma_white_from_ey};
pub use corrector::{
    corrector_chi, corrector_grad, CorrectorCache, CorrectorConstant, CorrectorGradient,
};
pub use expansion::{gamma_expansion_smooth, GammaExpansion, EXPANSION_TAIL_TOLERANCE};
pub use mc::{
    bridge_exp_integrals, default_bridge_grid, gamma_white_bridge_mc, sigma2_corrector_mc,
    sigma2_decay_fit, sigma2_nested_mc, sigma2_white_mc, winding_diffusivity_mc, DecayFit,
    WindingDiffusivity, DECAY_MAX_REL_STDERR, MC_BLOCK,
};
pub use yor::{yor_density, yor_moments, yor_moments_checked, QuadratureSpec, YorQuadrature};
