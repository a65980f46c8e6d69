//! Bilateral bargaining model of firm-to-firm trade pricing.
//!
//! The crate is organized bottom-up:
//!
//! * [`pricing`] holds the closed-form markup and pass-through algebra.
//! * [`network`] solves the price fixed point on a bipartite trade network.
//! * [`panel`] builds transaction panels, shares, filters and Monte Carlo designs.
//! * [`estimation`] recovers bargaining power and returns to scale from pair moments.
//! * [`econometrics`] provides fixed-effect OLS/2SLS and the validation regressions.
//! * [`cli`] wires everything into the `bargain` command-line tool.

pub mod cli;
pub mod econometrics;
pub mod error;
pub mod estimation;
pub mod network;
pub mod panel;
pub mod params;
pub mod pricing;
mod rootfind;

pub use error::{Error, Result};
pub use params::{BilateralShares, CalibratedParams, StructuralParams};
