//! Simulation core for a strongly driven rf-SQUID flux qubit.
//!
//! Energies are E/h in GHz, rates in ns⁻¹ and flux in units of Φ0 throughout.

pub mod circuit;
pub mod constants;
pub mod dynamics;
pub mod lz;
pub mod numfmt;
pub mod spectrum;
pub mod sweep;

pub use circuit::{CircuitError, CircuitParams, ValidationFlag, WellGeometry};
pub use constants::PhysicalConstants;
