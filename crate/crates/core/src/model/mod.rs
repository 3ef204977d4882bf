//! Shared domain types and the pointwise field quantities of the hydrodynamic picture.

pub mod calculus;
mod config;
mod field;
mod grid;
mod hydro;
mod potential;

pub use config::PhysicalConfig;
pub use field::{DensityField, FlowState, WaveFunction};
pub use grid::{Boundary, Grid, MIN_INTERVALS};
pub use hydro::{
    closure_sides, floored, madelung_compose, madelung_decompose, mean_stochastic_acceleration,
    osmotic_velocity, quantum_potential, MIN_THIRD_DIFF_INTERVALS, RHO_FLOOR,
};
pub(crate) use hydro::quantum_potential_into;
pub use potential::{ForceTable, Potential, TabulatedPotential};
