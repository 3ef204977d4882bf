//! Classical Brownian motion, frictionless quantum motion and quantum Brownian
//! motion on 1-D grids and trajectory ensembles.
//!
//! * [`model`]: physical constants, grids, fields, potentials and the
//!   hydrodynamic field quantities (quantum potential, osmotic velocity).
//! * [`langevin`]: Euler-Maruyama trajectory ensembles with force noise,
//!   velocity noise or both, plus Favre-average and MSD estimators.
//! * [`smoluchowski`]: conservative grid solvers for the classical and the
//!   zero-temperature quantum Smoluchowski equations.
//! * [`quantum`]: split-step Schrödinger and Madelung hydrodynamics.
//! * [`thermo`]: grid Hamiltonian spectrum, partition function, Gibbs density
//!   and reciprocal-temperature propagation.
//! * [`dispersion`]: free-particle dispersion dynamics of the quantum
//!   Smoluchowski equation.

pub mod dispersion;
pub mod error;
pub mod export;
pub mod langevin;
pub mod model;
pub mod quantum;
pub mod smoluchowski;
pub mod thermo;

pub use error::{Error, Result};
