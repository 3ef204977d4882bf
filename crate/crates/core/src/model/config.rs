use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Physical constants shared by every regime.
///
/// The friction matrix is `B = gamma * mass` and the quantum diffusion
/// coefficient is `D = hbar / (2 * mass)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConfig {
    pub hbar: f64,
    pub mass: f64,
    /// Friction rate; zero for frictionless dynamics.
    pub gamma: f64,
    /// Thermal energy k_B T; zero for the ground-state limit.
    #[serde(rename = "kT")]
    pub kt: f64,
}

impl Default for PhysicalConfig {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            gamma: 1.0,
            kt: 1.0,
        }
    }
}

impl PhysicalConfig {
    pub fn new(hbar: f64, mass: f64, gamma: f64, kt: f64) -> Result<Self> {
        let cfg = Self {
            hbar,
            mass,
            gamma,
            kt,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(invalid("hbar", "must be finite and > 0"));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(invalid("mass", "must be finite and > 0"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(invalid("gamma", "must be finite and >= 0"));
        }
        if !(self.kt.is_finite() && self.kt >= 0.0) {
            return Err(invalid("kT", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Quantum diffusion coefficient `hbar / 2m`.
    pub fn diffusion(&self) -> f64 {
        self.hbar / (2.0 * self.mass)
    }

    /// Reciprocal temperature; infinite at `kT = 0`.
    pub fn beta(&self) -> f64 {
        if self.kt == 0.0 {
            f64::INFINITY
        } else {
            1.0 / self.kt
        }
    }

    /// Friction coefficient `B = gamma * mass`.
    pub fn friction(&self) -> f64 {
        self.gamma * self.mass
    }

    /// Einstein diffusion coefficient `kT / B` of the classical overdamped limit.
    pub fn einstein_diffusion(&self) -> f64 {
        self.kt / self.friction()
    }

    pub fn with_kt(mut self, kt: f64) -> Self {
        self.kt = kt;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_hbar(mut self, hbar: f64) -> Self {
        self.hbar = hbar;
        self
    }

    pub fn with_mass(mut self, mass: f64) -> Self {
        self.mass = mass;
        self
    }
}
