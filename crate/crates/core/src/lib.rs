//! Pricing and calibration of synthetic CDO tranches under the large-basket
//! structural model.
//!
//! Every name in the basket follows a drifted Brownian distance to default
//! driven by an idiosyncratic and a common factor. In the large-basket limit
//! the distribution of surviving names has a density that solves a linear
//! SPDE driven only by the common factor. This crate discretizes that density
//! and evolves it with four interchangeable schemes:
//!
//! * Euler–Maruyama on the SPDE ([`spde`]),
//! * second-order Itô–Magnus on the SPDE ([`spde`]),
//! * Crank–Nicolson with Rannacher start-up on the shifted PDE ([`pde`]),
//! * the exact (deterministic Magnus) propagator of the shifted PDE ([`pde`]).
//!
//! The resulting loss paths feed the tranche and index spread formulas in
//! [`pricing`]. Initial distances to default are inferred from CDS quotes in
//! closed form ([`single_name`]) or through pre-trained networks ([`nn`]), and
//! [`calibration`] fits correlation and volatility to tranche and index
//! quotes.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// banded kernels read clearer with explicit index ranges
#![allow(clippy::needless_range_loop)]

pub mod calibration;
pub mod discretization;
pub mod driver;
pub mod engine;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod monte_carlo;
pub mod nn;
pub mod optimize;
pub mod params;
pub mod pde;
pub mod pricing;
pub mod rng;
pub mod single_name;
pub mod spde;
pub mod spline;
pub mod synthetic;

pub use error::{Error, Result};
pub use exec::Execution;
pub use params::{MarketQuotes, ModelParams, Schedule, TrancheSpec};
