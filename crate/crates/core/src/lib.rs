//! Numerical toolkit for infinite-delay stochastic control: path-space
//! calculus, smooth gauge functionals, perturbed maximization, delay-SDE
//! simulation, discounted value estimation, and HJB residual checks.

pub mod calculus;
pub mod fixtures;
pub mod gauge;
pub mod hjb;
pub mod path;
pub mod report;
pub mod sampling;
pub mod sde;
pub mod value;
pub mod variational;
