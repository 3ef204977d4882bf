use num_complex::Complex64;

use super::grid::Grid;
use crate::error::{invalid, Error, Result};

/// Probability density per unit length sampled on the nodes of a grid.
///
/// Construction normalizes the values so that the grid quadrature is one.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: Grid,
    values: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(
                "density",
                format!("{} values for {} nodes", values.len(), grid.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid(
                "density",
                format!("value at node {i} is negative or not finite"),
            ));
        }
        let mass = grid.integrate(&values);
        if !(mass > 0.0) {
            return Err(invalid("density", "total probability is zero"));
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.points().into_iter().map(f).collect())
    }

    /// Wraps values that are already normalized by a conservative update.
    pub(crate) fn from_conserved(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn gaussian(grid: Grid, center: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(invalid("sigma", "must be > 0"));
        }
        Self::from_fn(grid, |x| (-(x - center).powi(2) / (2.0 * sigma * sigma)).exp())
    }

    pub fn uniform(grid: Grid) -> Self {
        let v = 1.0 / grid.length();
        Self {
            grid,
            values: vec![v; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Expectation of `f(x)` under the density.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        let g = &self.grid;
        self.values
            .iter()
            .enumerate()
            .map(|(i, r)| r * f(g.x(i)) * g.weight(i))
            .sum::<f64>()
            / self.mass()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expect(|x| (x - m) * (x - m))
    }

    /// Cumulative distribution at every node (trapezoid rule).
    pub fn cdf(&self) -> Vec<f64> {
        let dx = self.grid.dx();
        let n = self.values.len();
        let mut out = Vec::with_capacity(n);
        let mut acc = 0.0;
        out.push(0.0);
        for i in 1..n {
            acc += 0.5 * dx * (self.values[i - 1] + self.values[i]);
            out.push(acc);
        }
        if self.grid.is_periodic() {
            acc += 0.5 * dx * (self.values[n - 1] + self.values[0]);
        }
        out.iter().map(|c| c / acc).collect()
    }
}

/// Complex amplitude on the nodes of a grid, L²-normalized by the grid quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: Grid,
    values: Vec<Complex64>,
}

impl WaveFunction {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(
                "wave function",
                format!("{} values for {} nodes", values.len(), grid.len()),
            ));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(invalid("wave function", "non-finite amplitude"));
        }
        let mut psi = Self { grid, values };
        let norm = psi.norm();
        if !(norm > 0.0) {
            return Err(invalid("wave function", "zero norm"));
        }
        psi.values.iter_mut().for_each(|v| *v /= norm);
        Ok(psi)
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        Self::new(grid, grid.points().into_iter().map(f).collect())
    }

    pub(crate) fn from_unitary(grid: Grid, values: Vec<Complex64>) -> Self {
        Self { grid, values }
    }

    /// Gaussian packet with position spread `sigma` (of |ψ|²) and mean wavenumber `k0`.
    pub fn gaussian(grid: Grid, center: f64, sigma: f64, k0: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(invalid("sigma", "must be > 0"));
        }
        Self::from_fn(grid, |x| {
            let amp = (-(x - center).powi(2) / (4.0 * sigma * sigma)).exp();
            Complex64::from_polar(amp, k0 * x)
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v.norm_sqr()).collect();
        self.grid.integrate(&sq).sqrt()
    }

    pub fn probability(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn density(&self) -> DensityField {
        DensityField::new(self.grid, self.probability())
            .expect("normalized wave function has a valid density")
    }

    /// Grid inner product ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(i, (a, b))| a.conj() * b * self.grid.weight(i))
            .sum())
    }

    /// L² distance between two wave functions on the same grid.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let d: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .collect();
        Ok(self.grid.integrate(&d).sqrt())
    }

    /// Multiplies by `exp(i m v x / hbar)`.
    pub fn boosted(&self, mass: f64, hbar: f64, v: f64) -> Self {
        let k = mass * v / hbar;
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, a)| a * Complex64::from_polar(1.0, k * self.grid.x(i)))
            .collect();
        Self::from_unitary(self.grid, values)
    }
}

/// Hydrodynamic state: density, local-mean velocity and (optionally) the
/// velocity potential `S` with `m V = dS/dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub density: DensityField,
    pub velocity: Vec<f64>,
    pub phase: Option<Vec<f64>>,
}

impl FlowState {
    pub fn new(density: DensityField, velocity: Vec<f64>, phase: Option<Vec<f64>>) -> Result<Self> {
        let n = density.grid().len();
        if velocity.len() != n || phase.as_ref().is_some_and(|s| s.len() != n) {
            return Err(invalid("flow", "field lengths do not match the grid"));
        }
        Ok(Self {
            density,
            velocity,
            phase,
        })
    }

    pub fn at_rest(density: DensityField) -> Self {
        let n = density.grid().len();
        Self {
            density,
            velocity: vec![0.0; n],
            phase: Some(vec![0.0; n]),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.density.grid()
    }
}
