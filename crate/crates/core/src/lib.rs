//! Numerical certification of entropy tensorization and logarithmic Sobolev
//! bounds for weakly dependent spin systems.
//!
//! The library works with a reference measure `q = exp(-V)` on a product
//! space, realized in two exactly computable families:
//!
//! * multivariate Gaussians, given by a positive definite precision matrix,
//!   where every quantity has a closed form, and
//! * finite real grids, where every quantity is an exact enumeration in the
//!   log domain.
//!
//! On top of the models sit exact divergence and quadratic-Wasserstein
//! computations ([`divergence`], [`transport`]), checkers for the
//! weak-dependence hypotheses and extraction of the dependence parameter
//! delta ([`conditions`]), the deterministic push-forward of densities
//! through one systematic Gibbs sweep with per-sweep entropy bookkeeping
//! ([`gibbs`]), and assembly of the headline tensorization and LSI bounds
//! ([`certify`]). A small arithmetic expression language for Hamiltonians
//! with exact symbolic partials lives in [`expr`].

pub mod certify;
pub mod conditions;
pub mod divergence;
pub mod error;
pub mod expr;
pub mod gibbs;
pub mod model;
pub mod tensor;
pub mod transport;

pub use error::{Error, Result};
