//! Uncertainty quantification for hierarchical nanoporous media.
//!
//! Causally constrained priors over the pore parameters `(R, theta, d, l)`
//! are pushed through a homogenization cell problem to the effective
//! coefficients `D_L`, `D_T` and `gamma_eff`. Polynomial-chaos surrogates of
//! those coefficients feed kernel density estimates, mutual-information
//! sensitivity indices and two-sample Cramér tests.

pub mod bayesnet;
pub mod closure;
pub mod density;
pub mod error;
pub mod geometry;
pub mod gsa;
pub mod linsolve;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod surrogate;

pub use error::{Error, Result};
