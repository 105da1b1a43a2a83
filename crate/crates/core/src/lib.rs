//! Risk-based probabilistic transient stability assessment and
//! circuit-breaker priority ranking.
//!
//! The pipeline runs from an IEEE Common Data Format case plus a
//! classical-model dynamics sidecar to ranked breaker tables:
//!
//! ```text
//! sample scenario -> power flow -> fault network -> swing simulation
//!                 -> delta_max -> TSSI / severity -> per-sample risk -> R_A ranking
//! ```
//!
//! Modules:
//! - [`network`]: case parsing, dynamics sidecar, breaker registry, Y-bus.
//! - [`powerflow`]: Newton-Raphson pre-fault solution and machine internals.
//! - [`fault`]: sequence Thevenin impedances, fault shunts, Kron reduction.
//! - [`sim`]: classical swing equations with fixed-step RK4.
//! - [`smib`]: single-machine infinite-bus benchmark.
//! - [`sampling`]: Monte-Carlo scenario draws and Cochran sizing.
//! - [`risk`]: risk indices and the three ranking procedures.
//! - [`report`]: CSV/JSON report and trajectory emission.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fault;
pub mod network;
pub mod powerflow;
pub mod report;
pub mod risk;
pub mod sampling;
pub mod sim;
pub mod smib;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Dense complex matrix used for nodal admittances.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
