//! Numerics for SDEs with discontinuous, locally integrable drift.
//!
//! The crate follows the constructive route to strong solutions: solve the
//! backward parabolic Dirichlet problem with rough coefficients, build the
//! drift-removing change of variables `Phi(t, x) = x + u(t, x)` and invert
//! it, simulate localized paths up to the first exit from a bounded domain,
//! and glue localized paths over growing balls under a Lyapunov condition.
//! Monte Carlo harnesses check the occupation-time (Krylov), stability and
//! exponential-moment estimates that the construction relies on.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod lyapunov;
pub mod maximal;
pub mod monte_carlo;
pub mod pde;
pub mod rng;
pub mod scenarios;
pub mod sde;
pub mod stats;
pub mod verify;
pub mod zvonkin;

pub use error::{Error, Result};
pub use geometry::{
    BoundedDomain, CoefficientField, FieldSlice, GridFunction, Region, Regularity, SpaceTimeGrid,
    SpatialGrid,
};
pub use rng::StreamSpec;
pub use sde::{PathSample, Recording};
