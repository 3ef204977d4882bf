use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Node `n` is identified with node 0; the grid stores `n` nodes.
    Periodic,
    /// Zero-flux walls at `x_min` and `x_max`; the grid stores `n + 1` nodes.
    Reflecting,
}

/// Uniform 1-D mesh with `n` intervals of width `dx = (x_max - x_min) / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub boundary: Boundary,
}

pub const MIN_INTERVALS: usize = 8;

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n: usize, boundary: Boundary) -> Result<Self> {
        let grid = Self {
            x_min,
            x_max,
            n,
            boundary,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn periodic(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        Self::new(x_min, x_max, n, Boundary::Periodic)
    }

    pub fn reflecting(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        Self::new(x_min, x_max, n, Boundary::Reflecting)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min.is_finite() && self.x_max.is_finite()) {
            return Err(invalid("grid", "bounds must be finite"));
        }
        if self.x_max <= self.x_min {
            return Err(invalid("grid", "x_max must exceed x_min"));
        }
        if self.n < MIN_INTERVALS {
            return Err(Error::GridTooCoarse {
                n: self.n,
                min: MIN_INTERVALS,
            });
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n as f64
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    /// Number of stored nodes.
    pub fn len(&self) -> usize {
        match self.boundary {
            Boundary::Periodic => self.n,
            Boundary::Reflecting => self.n + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.x(i)).collect()
    }

    /// Quadrature weight of node `i`: `dx` on periodic grids, trapezoid on reflecting ones.
    pub fn weight(&self, i: usize) -> f64 {
        let dx = self.dx();
        match self.boundary {
            Boundary::Periodic => dx,
            Boundary::Reflecting if i == 0 || i == self.n => 0.5 * dx,
            Boundary::Reflecting => dx,
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        values
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.weight(i))
            .sum()
    }

    /// Same grid with the interval count doubled.
    pub fn refined(&self) -> Self {
        Self {
            n: 2 * self.n,
            ..*self
        }
    }

    /// Maps an arbitrary position into the domain: wrap on periodic grids,
    /// mirror reflection on reflecting ones.
    pub fn fold(&self, x: f64) -> f64 {
        let l = self.length();
        match self.boundary {
            Boundary::Periodic => self.x_min + (x - self.x_min).rem_euclid(l),
            Boundary::Reflecting => {
                let u = (x - self.x_min).rem_euclid(2.0 * l);
                let u = if u > l { 2.0 * l - u } else { u };
                self.x_min + u
            }
        }
    }

    /// Linear interpolation of nodal `values` at `x` (folded into the domain first).
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let x = self.fold(x);
        let s = (x - self.x_min) / self.dx();
        let i = (s.floor() as usize).min(self.n.saturating_sub(1));
        let frac = s - i as f64;
        let j = match self.boundary {
            Boundary::Periodic => (i + 1) % self.n,
            Boundary::Reflecting => i + 1,
        };
        values[i] * (1.0 - frac) + values[j] * frac
    }

    /// Index of the node whose control cell contains `x`, or `None` outside the domain.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let s = (x - self.x_min) / self.dx();
        match self.boundary {
            Boundary::Periodic => {
                let s = s.rem_euclid(self.n as f64);
                let k = (s + 0.5).floor() as usize;
                Some(k % self.n)
            }
            Boundary::Reflecting => {
                if !(0.0..=self.n as f64).contains(&s) {
                    return None;
                }
                Some(((s + 0.5).floor() as usize).min(self.n))
            }
        }
    }
}
