//! Conservative finite-volume solvers for the overdamped density equations.
//!
//! Every node `i` owns a control cell of width `w_i` (half cells at reflecting
//! walls) and the density changes only through interface fluxes, so the grid
//! quadrature of the density is conserved to rounding.
//!
//! The classical equation `d_t rho = d_x [(rho U' + kT rho') / B]` uses
//! exponentially fitted (Scharfetter-Gummel) interface fluxes, which keep the
//! update positive and make the discrete Boltzmann density an exact fixed point.
//! The zero-temperature quantum equation `d_t rho = d_x [rho (U + Q)' / B]` has
//! no diffusive part; its drift flux uses van Leer limited upwind reconstruction.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{
    quantum_potential_into, Boundary, DensityField, Grid, PhysicalConfig, Potential,
};

/// `a / (exp(a) - 1)`, the Bernoulli weight of the fitted flux.
fn bernoulli(a: f64) -> f64 {
    if a.abs() < 1e-8 {
        1.0 - 0.5 * a
    } else {
        a / a.exp_m1()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    Classical,
    QuantumT0,
}

/// Number of flux interfaces: one per cell on periodic grids, `n` between the
/// `n + 1` nodes of a reflecting grid.
fn interfaces(grid: &Grid) -> usize {
    grid.n
}

fn right(grid: &Grid, i: usize) -> usize {
    match grid.boundary {
        Boundary::Periodic => (i + 1) % grid.n,
        Boundary::Reflecting => i + 1,
    }
}

/// Applies `rho_i -= dt / w_i (J_{i+1/2} - J_{i-1/2})`.
fn apply_fluxes(grid: &Grid, weights: &[f64], flux: &[f64], dt: f64, rho: &mut [f64]) {
    let m = interfaces(grid);
    for (k, j) in flux.iter().enumerate().take(m) {
        let r = right(grid, k);
        rho[k] -= dt / weights[k] * j;
        rho[r] += dt / weights[r] * j;
    }
}

/// Explicit stepper for one of the overdamped equations with cached geometry.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: Grid,
    cfg: PhysicalConfig,
    dynamics: Dynamics,
    potential: Vec<f64>,
    weights: Vec<f64>,
    dt: f64,
    flux: Vec<f64>,
    classical_limit: f64,
    scratch: [Vec<f64>; 4],
}

impl Stepper {
    pub fn new(
        grid: Grid,
        pot: &Potential,
        cfg: &PhysicalConfig,
        dynamics: Dynamics,
        dt: f64,
    ) -> Result<Self> {
        grid.validate()?;
        cfg.validate()?;
        if !(cfg.gamma > 0.0) {
            return Err(invalid("gamma", "overdamped dynamics needs gamma > 0"));
        }
        if dynamics == Dynamics::Classical && !(cfg.kt > 0.0) {
            return Err(invalid("kT", "classical Smoluchowski dynamics needs kT > 0"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", "must be finite and > 0"));
        }
        let mut stepper = Self {
            grid,
            cfg: *cfg,
            dynamics,
            potential: pot.on_grid(&grid, cfg)?,
            weights: grid.weights(),
            dt,
            flux: vec![0.0; interfaces(&grid)],
            classical_limit: f64::INFINITY,
            scratch: std::array::from_fn(|_| vec![0.0; grid.len()]),
        };
        if dynamics == Dynamics::Classical {
            stepper.classical_limit = stepper.classical_bound();
        }
        Ok(stepper)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Largest admissible step for the current density.
    pub fn stability_bound(&mut self, rho: &[f64]) -> Result<f64> {
        match self.dynamics {
            Dynamics::Classical => Ok(self.classical_limit),
            Dynamics::QuantumT0 => self.quantum_fluxes(rho).map(|b| b.min(self.quantum_linear_bound())),
        }
    }

    fn classical_bound(&self) -> f64 {
        let g = &self.grid;
        let dx = g.dx();
        let d = self.cfg.einstein_diffusion();
        let m = interfaces(g);
        let mut out_rate = vec![0.0; g.len()];
        for k in 0..m {
            let r = right(g, k);
            let a = (self.potential[r] - self.potential[k]) / self.cfg.kt;
            out_rate[k] += d / dx * bernoulli(a);
            out_rate[r] += d / dx * bernoulli(-a);
        }
        out_rate
            .iter()
            .zip(&self.weights)
            .filter(|(rate, _)| **rate > 0.0)
            .map(|(rate, w)| w / rate)
            .fold(f64::INFINITY, f64::min)
    }

    /// Linear stability limit of the fourth-order quantum relaxation.
    fn quantum_linear_bound(&self) -> f64 {
        let dx = self.grid.dx();
        let c = &self.cfg;
        dx.powi(4) * c.gamma * c.mass * c.mass / (2.0 * c.hbar * c.hbar)
    }

    fn classical_fluxes(&mut self, rho: &[f64]) {
        let g = self.grid;
        let dx = g.dx();
        let d = self.cfg.einstein_diffusion();
        for k in 0..interfaces(&g) {
            let r = right(&g, k);
            let a = (self.potential[r] - self.potential[k]) / self.cfg.kt;
            self.flux[k] = d / dx * (bernoulli(a) * rho[k] - bernoulli(-a) * rho[r]);
        }
    }

    /// Fills the drift fluxes and returns the positivity bound on `dt`.
    fn quantum_fluxes(&mut self, rho: &[f64]) -> Result<f64> {
        let g = self.grid;
        let n = rho.len();
        let dx = g.dx();
        let [amp, phi, slope, speed] = &mut self.scratch;
        quantum_potential_into(rho, &g, &self.cfg, amp, phi)?;
        for (p, u) in phi.iter_mut().zip(&self.potential) {
            *p += u;
        }

        // van Leer limited slopes; walls get zero slope.
        for i in 0..n {
            let (l, r) = match g.boundary {
                Boundary::Periodic => ((i + n - 1) % n, (i + 1) % n),
                Boundary::Reflecting if i == 0 || i == n - 1 => {
                    slope[i] = 0.0;
                    continue;
                }
                Boundary::Reflecting => (i - 1, i + 1),
            };
            let a = rho[i] - rho[l];
            let b = rho[r] - rho[i];
            slope[i] = if a * b <= 0.0 { 0.0 } else { 2.0 * a * b / (a + b) };
        }

        let friction = self.cfg.friction();
        speed.iter_mut().for_each(|s| *s = 0.0);
        for k in 0..interfaces(&g) {
            let r = right(&g, k);
            let v = -(phi[r] - phi[k]) / (friction * dx);
            let face = if v >= 0.0 {
                rho[k] + 0.5 * slope[k]
            } else {
                rho[r] - 0.5 * slope[r]
            };
            self.flux[k] = v * face;
            speed[k] += v.abs();
            speed[r] += v.abs();
        }
        Ok(speed
            .iter()
            .zip(&self.weights)
            .filter(|(s, _)| **s > 0.0)
            .map(|(s, w)| w / (2.0 * s))
            .fold(f64::INFINITY, f64::min))
    }

    /// Advances `rho` in place by one step.
    pub fn step(&mut self, rho: &mut [f64]) -> Result<()> {
        let bound = match self.dynamics {
            Dynamics::Classical => {
                self.classical_fluxes(rho);
                self.classical_limit
            }
            Dynamics::QuantumT0 => self.quantum_fluxes(rho)?.min(self.quantum_linear_bound()),
        };
        if self.dt > bound {
            return Err(Error::StabilityBound { dt: self.dt, bound });
        }
        apply_fluxes(&self.grid, &self.weights, &self.flux, self.dt, rho);
        Ok(())
    }
}

fn step_with(
    rho: &DensityField,
    pot: &Potential,
    cfg: &PhysicalConfig,
    dt: f64,
    dynamics: Dynamics,
) -> Result<DensityField> {
    let mut stepper = Stepper::new(*rho.grid(), pot, cfg, dynamics, dt)?;
    let mut values = rho.values().to_vec();
    stepper.step(&mut values)?;
    Ok(DensityField::from_conserved(*rho.grid(), values))
}

/// One explicit step of the classical Smoluchowski equation.
pub fn step_classical(
    rho: &DensityField,
    pot: &Potential,
    cfg: &PhysicalConfig,
    dt: f64,
) -> Result<DensityField> {
    step_with(rho, pot, cfg, dt, Dynamics::Classical)
}

/// One explicit step of the zero-temperature quantum Smoluchowski equation.
pub fn step_quantum_t0(
    rho: &DensityField,
    pot: &Potential,
    cfg: &PhysicalConfig,
    dt: f64,
) -> Result<DensityField> {
    step_with(rho, pot, cfg, dt, Dynamics::QuantumT0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub density: DensityField,
}

/// Repeated stepping; snapshots at `t = 0` and every `snapshot_every` steps,
/// plus the final state.
pub fn evolve(
    rho0: &DensityField,
    pot: &Potential,
    cfg: &PhysicalConfig,
    dynamics: Dynamics,
    dt: f64,
    n_steps: usize,
    snapshot_every: usize,
) -> Result<Vec<Snapshot>> {
    match evolve_partial(rho0, pot, cfg, dynamics, dt, n_steps, snapshot_every)? {
        (snaps, None) => Ok(snaps),
        (_, Some(e)) => Err(e),
    }
}

/// As [`evolve`], but a failing step ends the run and is returned next to the
/// snapshots taken before it. Construction errors are returned directly.
pub fn evolve_partial(
    rho0: &DensityField,
    pot: &Potential,
    cfg: &PhysicalConfig,
    dynamics: Dynamics,
    dt: f64,
    n_steps: usize,
    snapshot_every: usize,
) -> Result<(Vec<Snapshot>, Option<Error>)> {
    let grid = *rho0.grid();
    let mut stepper = Stepper::new(grid, pot, cfg, dynamics, dt)?;
    let every = snapshot_every.max(1);
    let mut values = rho0.values().to_vec();
    let mut out = vec![Snapshot {
        t: 0.0,
        density: rho0.clone(),
    }];
    for step in 1..=n_steps {
        if let Err(e) = stepper.step(&mut values) {
            let failure = Error::StepFailed {
                step,
                source: Box::new(e),
            };
            return Ok((out, Some(failure)));
        }
        if step % every == 0 || step == n_steps {
            out.push(Snapshot {
                t: step as f64 * dt,
                density: DensityField::from_conserved(grid, values.clone()),
            });
        }
    }
    Ok((out, None))
}

pub fn classical_free_energy(rho: &DensityField, pot: &Potential, cfg: &PhysicalConfig) -> Result<f64> {
    let grid = rho.grid();
    let u = pot.on_grid(grid, cfg)?;
    let integrand: Vec<f64> = rho
        .values()
        .iter()
        .zip(&u)
        .map(|(&r, u)| {
            let entropy = if r > 0.0 { r * r.ln() } else { 0.0 };
            u * r + cfg.kt * entropy
        })
        .collect();
    Ok(grid.integrate(&integrand))
}

/// Normalized Boltzmann density `exp(-U / kT) / Z` on the grid.
pub fn boltzmann_density(grid: &Grid, pot: &Potential, cfg: &PhysicalConfig) -> Result<DensityField> {
    if !(cfg.kt > 0.0) {
        return Err(invalid("kT", "Boltzmann density needs kT > 0"));
    }
    let u = pot.on_grid(grid, cfg)?;
    let umin = u.iter().cloned().fold(f64::INFINITY, f64::min);
    DensityField::new(*grid, u.iter().map(|u| (-(u - umin) / cfg.kt).exp()).collect())
}
