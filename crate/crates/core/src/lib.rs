//! Loss networks with routing under proportional scaling of arrival rates and
//! capacities.
//!
//! * [`model`]: network description, validation and derived parameters.
//! * [`ctmc`]: exact simulation of the occupancy process and generator
//!   enumeration for small instances.
//! * [`fluid`]: the limiting ODE, its acceptance function and integrator.
//! * [`equilibrium`]: the unique equilibrium point and its cross-checks.
//! * [`appendix`]: the sequence inequality behind the uniqueness argument.
//! * [`compare`]: stochastic-versus-fluid convergence report.

// `!(x > 0.0)` is used on purpose so that NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod appendix;
pub mod compare;
pub mod ctmc;
pub mod equilibrium;
mod error;
pub mod fluid;
pub mod grid;
pub mod model;
pub mod report;

pub use error::{Error, Result};
pub use model::{catalog, Network, NetworkSpec};
