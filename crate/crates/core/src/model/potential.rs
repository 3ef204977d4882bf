use serde::{Deserialize, Serialize};

use super::config::PhysicalConfig;
use super::grid::Grid;
use crate::error::{invalid, Result};

/// External potential U(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    Free,
    /// `U = m omega^2 x^2 / 2`.
    Harmonic { omega: f64 },
    /// Quartic well `U = barrier ((2x / separation)^2 - 1)^2` with minima at `±separation/2`.
    DoubleWell { barrier: f64, separation: f64 },
    Tabulated(TabulatedPotential),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedPotential {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl TabulatedPotential {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let t = Self { grid, values };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.values.len() != self.grid.len() {
            return Err(invalid(
                "potential.values",
                format!(
                    "{} values for a grid with {} nodes",
                    self.values.len(),
                    self.grid.len()
                ),
            ));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("potential.values", "non-finite entry"));
        }
        Ok(())
    }

    fn slope(&self) -> Vec<f64> {
        super::calculus::d1(&self.values, &self.grid)
    }
}

impl Potential {
    pub fn validate(&self) -> Result<()> {
        match self {
            Potential::Free => Ok(()),
            Potential::Harmonic { omega } => {
                if omega.is_finite() && *omega > 0.0 {
                    Ok(())
                } else {
                    Err(invalid("potential.omega", "must be finite and > 0"))
                }
            }
            Potential::DoubleWell {
                barrier,
                separation,
            } => {
                if !(barrier.is_finite() && *barrier >= 0.0) {
                    return Err(invalid("potential.barrier", "must be finite and >= 0"));
                }
                if !(separation.is_finite() && *separation > 0.0) {
                    return Err(invalid("potential.separation", "must be finite and > 0"));
                }
                Ok(())
            }
            Potential::Tabulated(t) => t.validate(),
        }
    }

    pub fn value(&self, x: f64, cfg: &PhysicalConfig) -> f64 {
        match self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => 0.5 * cfg.mass * omega * omega * x * x,
            Potential::DoubleWell {
                barrier,
                separation,
            } => {
                let u = 2.0 * x / separation;
                barrier * (u * u - 1.0).powi(2)
            }
            Potential::Tabulated(t) => t.grid.interpolate(&t.values, x),
        }
    }

    /// dU/dx at an arbitrary position.
    pub fn gradient(&self, x: f64, cfg: &PhysicalConfig) -> f64 {
        match self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => cfg.mass * omega * omega * x,
            Potential::DoubleWell {
                barrier,
                separation,
            } => {
                let u = 2.0 * x / separation;
                barrier * 4.0 * u * (u * u - 1.0) * 2.0 / separation
            }
            // Tabulated gradients are only used by the trajectory samplers, which
            // go through `ForceTable`; this branch is a slow path.
            Potential::Tabulated(t) => t.grid.interpolate(&t.slope(), x),
        }
    }

    /// Values on the nodes of `grid`. Tabulated potentials must live on the same grid.
    pub fn on_grid(&self, grid: &Grid, cfg: &PhysicalConfig) -> Result<Vec<f64>> {
        self.validate()?;
        match self {
            Potential::Tabulated(t) => {
                if t.grid != *grid {
                    return Err(invalid(
                        "potential.values",
                        "tabulated potential lives on a different grid",
                    ));
                }
                Ok(t.values.clone())
            }
            _ => Ok(grid.points().into_iter().map(|x| self.value(x, cfg)).collect()),
        }
    }

    /// Gradient evaluator with tabulated slopes precomputed once.
    pub fn force_table(&self) -> ForceTable<'_> {
        let slope = match self {
            Potential::Tabulated(t) => Some(t.slope()),
            _ => None,
        };
        ForceTable { pot: self, slope }
    }
}

pub struct ForceTable<'a> {
    pot: &'a Potential,
    slope: Option<Vec<f64>>,
}

impl ForceTable<'_> {
    pub fn gradient(&self, x: f64, cfg: &PhysicalConfig) -> f64 {
        match (self.pot, &self.slope) {
            (Potential::Tabulated(t), Some(s)) => t.grid.interpolate(s, x),
            (p, _) => p.gradient(x, cfg),
        }
    }
}
