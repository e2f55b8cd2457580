//! Carrier kinetics of a semiconductor laser in the differential
//! approximation of the quantum Boltzmann collision operator, its zero-flux
//! and finite-flux equilibria, and the coupling to single-mode
//! Maxwell-Bloch dynamics.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod banded;
pub mod collision;
pub mod equilibria;
pub mod error;
pub mod kinetics;
pub mod laser;
pub mod model;

pub use collision::{BoundaryFluxes, FluxField, KForm, OCCUPATION_CLAMP};
pub use error::{Error, Result};
pub use model::{CarrierDistribution, MaterialParams, SpectralGrid, SpectralTotals, HBAR_MEV_FS};
pub use num_complex::Complex64;
