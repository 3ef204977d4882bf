//! Frictionless quantum propagation.
//!
//! [`SplitStep`] integrates the Schrödinger equation on a periodic grid with
//! Strang splitting and an exact spectral kinetic step. [`MadelungSolver`]
//! integrates the equivalent hydrodynamic pair
//!
//! ```text
//! d_t rho + d_x (rho V) = 0
//! d_t V + d_x (V^2 / 2) = -d_x (U + Q) / m
//! ```
//!
//! directly in `(rho, V)` with central differences and classical RK4, so the
//! two can be compared as independent dynamical systems.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::calculus::cumulative;
use crate::model::{
    Boundary, DensityField, FlowState, Grid, PhysicalConfig, Potential,
    WaveFunction, RHO_FLOOR,
};

/// Share of the kinetic energy in the top third of the spectral band above
/// which a propagation logs an aliasing warning.
pub const ALIASING_FRACTION: f64 = 1e-6;

/// Angular wavenumbers in FFT order.
fn wavenumbers(grid: &Grid) -> Vec<f64> {
    let n = grid.n;
    let base = std::f64::consts::TAU / grid.length();
    (0..n)
        .map(|j| {
            let j = j as f64;
            if 2 * (j as usize) < n {
                base * j
            } else {
                base * (j - n as f64)
            }
        })
        .collect()
}

/// Strang-split propagator `e^{-iU dt/2h} e^{-iT dt/h} e^{-iU dt/2h}`.
pub struct SplitStep {
    grid: Grid,
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl std::fmt::Debug for SplitStep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SplitStep").field("grid", &self.grid).finish_non_exhaustive()
    }
}

impl SplitStep {
    /// `dt` may be negative for backward propagation.
    pub fn new(grid: &Grid, pot: &Potential, cfg: &PhysicalConfig, dt: f64) -> Result<Self> {
        grid.validate()?;
        cfg.validate()?;
        if grid.boundary != Boundary::Periodic {
            return Err(Error::NonPeriodicGrid);
        }
        if !(dt.is_finite() && dt != 0.0) {
            return Err(invalid("dt", "must be finite and nonzero"));
        }
        let u = pot.on_grid(grid, cfg)?;
        let half_potential = u
            .iter()
            .map(|u| Complex64::from_polar(1.0, -u * dt / (2.0 * cfg.hbar)))
            .collect();
        let kinetic = wavenumbers(grid)
            .iter()
            .map(|k| Complex64::from_polar(1.0, -cfg.hbar * k * k * dt / (2.0 * cfg.mass)))
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.n);
        let inverse = planner.plan_fft_inverse(grid.n);
        let scratch = vec![Complex64::default(); forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())];
        Ok(Self {
            grid: *grid,
            half_potential,
            kinetic,
            forward,
            inverse,
            scratch,
        })
    }

    pub fn step(&mut self, psi: &mut [Complex64]) {
        let scale = 1.0 / self.grid.n as f64;
        psi.iter_mut().zip(&self.half_potential).for_each(|(p, u)| *p *= u);
        self.forward.process_with_scratch(psi, &mut self.scratch);
        psi.iter_mut().zip(&self.kinetic).for_each(|(p, k)| *p *= k * scale);
        self.inverse.process_with_scratch(psi, &mut self.scratch);
        psi.iter_mut().zip(&self.half_potential).for_each(|(p, u)| *p *= u);
    }

    pub fn run(&mut self, psi: &WaveFunction, n_steps: usize) -> Result<WaveFunction> {
        if psi.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let mut values = psi.values().to_vec();
        for _ in 0..n_steps {
            self.step(&mut values);
        }
        Ok(WaveFunction::from_unitary(self.grid, values))
    }
}

/// Spectral amplitudes `|psi_k|^2` (unnormalized FFT) and their wavenumbers.
fn spectrum(psi: &WaveFunction) -> (Vec<f64>, Vec<f64>) {
    let grid = psi.grid();
    let mut buf = psi.values().to_vec();
    FftPlanner::new().plan_fft_forward(grid.n).process(&mut buf);
    (wavenumbers(grid), buf.iter().map(|c| c.norm_sqr()).collect())
}

/// Fraction of the kinetic energy carried by wavenumbers above two thirds of
/// the Nyquist wavenumber. Requires a periodic grid.
pub fn top_band_fraction(psi: &WaveFunction) -> Result<f64> {
    if !psi.grid().is_periodic() {
        return Err(Error::NonPeriodicGrid);
    }
    let (k, power) = spectrum(psi);
    let k_cut = 2.0 / 3.0 * std::f64::consts::PI / psi.grid().dx();
    let (mut top, mut total) = (0.0, 0.0);
    for (k, p) in k.iter().zip(&power) {
        let e = k * k * p;
        total += e;
        if k.abs() > k_cut {
            top += e;
        }
    }
    Ok(if total > 0.0 { top / total } else { 0.0 })
}

fn warn_if_aliased(psi: &WaveFunction, when: &str) {
    if let Ok(frac) = top_band_fraction(psi) {
        if frac > ALIASING_FRACTION {
            log::warn!(
                "{when}: {frac:.2e} of the kinetic energy sits in the top third of the spectral band; refine the grid"
            );
        }
    }
}

/// `n_steps` Strang steps of size `dt` on a periodic grid.
pub fn split_step_propagate(
    psi: &WaveFunction,
    pot: &Potential,
    cfg: &PhysicalConfig,
    dt: f64,
    n_steps: usize,
) -> Result<WaveFunction> {
    let mut prop = SplitStep::new(psi.grid(), pot, cfg, dt)?;
    warn_if_aliased(psi, "initial state");
    let out = prop.run(psi, n_steps)?;
    warn_if_aliased(&out, "final state");
    Ok(out)
}

/// `<psi|H|psi>`. The kinetic term is spectral on periodic grids and the
/// second difference with Dirichlet walls on reflecting ones.
pub fn energy(psi: &WaveFunction, pot: &Potential, cfg: &PhysicalConfig) -> Result<f64> {
    let grid = psi.grid();
    let u = pot.on_grid(grid, cfg)?;
    let prob = psi.probability();
    let potential: Vec<f64> = u.iter().zip(&prob).map(|(u, p)| u * p).collect();
    let potential = grid.integrate(&potential);
    let kinetic = match grid.boundary {
        Boundary::Periodic => {
            let (k, power) = spectrum(psi);
            let sum: f64 = k.iter().zip(&power).map(|(k, p)| k * k * p).sum();
            cfg.hbar * cfg.hbar / (2.0 * cfg.mass) * sum * grid.dx() / grid.n as f64
        }
        Boundary::Reflecting => {
            // Sum of |psi_{i+1} - psi_i|^2 over all intervals, walls held at zero.
            let v = psi.values();
            let n = v.len();
            let dx = grid.dx();
            let mut sum = 0.0;
            for i in 1..n - 2 {
                sum += (v[i + 1] - v[i]).norm_sqr();
            }
            sum += v[1].norm_sqr() + v[n - 2].norm_sqr();
            cfg.hbar * cfg.hbar / (2.0 * cfg.mass) * sum / dx
        }
    };
    Ok(kinetic + potential)
}

/// Distances between two densities on the same grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityMetrics {
    pub l1: f64,
    pub l2: f64,
    pub max: f64,
}

pub fn compare_densities(a: &DensityField, b: &DensityField) -> Result<DensityMetrics> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = a.grid();
    let diff: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).collect();
    let sq: Vec<f64> = diff.iter().map(|d| d * d).collect();
    Ok(DensityMetrics {
        l1: grid.integrate(&diff),
        l2: grid.integrate(&sq).sqrt(),
        max: diff.iter().cloned().fold(0.0, f64::max),
    })
}

/// `Q = -hbar^2 / 2m ((ln a)'' + (ln a)'^2)` with `a = sqrt(rho)`.
///
/// Equivalent to `-hbar^2 a'' / 2m a` but free of division by small
/// amplitudes, and exact on the grid whenever `ln a` is quadratic.
fn log_amplitude_potential(rho: &[f64], grid: &Grid, cfg: &PhysicalConfig, log_amp: &mut [f64], out: &mut [f64]) {
    let n = rho.len();
    let eps = RHO_FLOOR * rho.iter().cloned().fold(0.0, f64::max);
    for (l, r) in log_amp.iter_mut().zip(rho) {
        *l = 0.5 * r.max(eps).ln();
    }
    let dx = grid.dx();
    let scale = -cfg.hbar * cfg.hbar / (2.0 * cfg.mass);
    let q = |d1: f64, d2: f64| scale * (d2 + d1 * d1);
    let l = &*log_amp;
    for i in 1..n - 1 {
        out[i] = q((l[i + 1] - l[i - 1]) / (2.0 * dx), (l[i + 1] - 2.0 * l[i] + l[i - 1]) / (dx * dx));
    }
    match grid.boundary {
        Boundary::Periodic => {
            out[0] = q((l[1] - l[n - 1]) / (2.0 * dx), (l[1] - 2.0 * l[0] + l[n - 1]) / (dx * dx));
            out[n - 1] = q((l[0] - l[n - 2]) / (2.0 * dx), (l[0] - 2.0 * l[n - 1] + l[n - 2]) / (dx * dx));
        }
        Boundary::Reflecting => {
            out[0] = q(
                (-3.0 * l[0] + 4.0 * l[1] - l[2]) / (2.0 * dx),
                (2.0 * l[0] - 5.0 * l[1] + 4.0 * l[2] - l[3]) / (dx * dx),
            );
            out[n - 1] = q(
                (3.0 * l[n - 1] - 4.0 * l[n - 2] + l[n - 3]) / (2.0 * dx),
                (2.0 * l[n - 1] - 5.0 * l[n - 2] + 4.0 * l[n - 3] - l[n - 4]) / (dx * dx),
            );
        }
    }
}

/// On reflecting grids the two end nodes are not evolved: `ln rho` and `V`
/// are extrapolated quadratically from the three nearest interior nodes.
/// Letting the ends evolve with one-sided stencils excites growing modes
/// localized at the walls.
fn extrapolate_ends(grid: &Grid, s: &mut Stage) {
    if grid.is_periodic() {
        return;
    }
    let n = s.rho.len();
    let quad = |a: f64, b: f64, c: f64| 3.0 * a - 3.0 * b + c;
    let ln = |r: f64| r.max(f64::MIN_POSITIVE).ln();
    for (e, a, b, c) in [(0, 1, 2, 3), (n - 1, n - 2, n - 3, n - 4)] {
        s.rho[e] = quad(ln(s.rho[a]), ln(s.rho[b]), ln(s.rho[c])).exp();
        s.vel[e] = quad(s.vel[a], s.vel[b], s.vel[c]);
    }
}

#[derive(Debug, Clone)]
struct Stage {
    rho: Vec<f64>,
    vel: Vec<f64>,
}

impl Stage {
    fn zeros(n: usize) -> Self {
        Self {
            rho: vec![0.0; n],
            vel: vec![0.0; n],
        }
    }
}

/// Explicit RK4 integrator of the hydrodynamic equations for nodeless states.
///
/// Continuity is updated from face fluxes `(rho_i V_i + rho_{i+1} V_{i+1}) / 2`,
/// momentum from the central gradient of `V^2 / 2 + (U + Q) / m`, and `Q` is
/// recomputed at every stage. On reflecting grids the ends are open: their
/// values follow the interior (see [`extrapolate_ends`]) and mass can leave
/// through them.
#[derive(Debug, Clone)]
pub struct MadelungSolver {
    grid: Grid,
    cfg: PhysicalConfig,
    potential: Vec<f64>,
    weights: Vec<f64>,
    dt: f64,
    state: Stage,
    time: f64,
    steps: usize,
    k: [Stage; 4],
    tmp: Stage,
    amp: Vec<f64>,
    q: Vec<f64>,
    flux: Vec<f64>,
    g: Vec<f64>,
}

impl MadelungSolver {
    pub fn new(flow: &FlowState, pot: &Potential, cfg: &PhysicalConfig, dt: f64) -> Result<Self> {
        cfg.validate()?;
        let grid = *flow.grid();
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", "must be finite and > 0"));
        }
        if flow.velocity.iter().any(|v| !v.is_finite()) {
            return Err(invalid("velocity", "must be finite"));
        }
        let n = grid.len();
        let solver = Self {
            grid,
            cfg: *cfg,
            potential: pot.on_grid(&grid, cfg)?,
            weights: grid.weights(),
            dt,
            state: Stage {
                rho: flow.density.values().to_vec(),
                vel: flow.velocity.clone(),
            },
            time: 0.0,
            steps: 0,
            k: std::array::from_fn(|_| Stage::zeros(n)),
            tmp: Stage::zeros(n),
            amp: vec![0.0; n],
            q: vec![0.0; n],
            flux: vec![0.0; grid.n],
            g: vec![0.0; n],
        };
        if let Some(node) = solver.find_node(&solver.state.rho) {
            return Err(Error::NodeDetected { node });
        }
        let mut solver = solver;
        extrapolate_ends(&grid, &mut solver.state);
        if let Some(node) = solver.find_node(&solver.state.rho) {
            return Err(Error::NodeDetected { node });
        }
        Ok(solver)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `0.5 dx / (max|V| + hbar / (m dx))`.
    pub fn cfl_bound(&self) -> f64 {
        let dx = self.grid.dx();
        let vmax = self.state.vel.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        0.5 * dx / (vmax + self.cfg.hbar / (self.cfg.mass * dx))
    }

    fn find_node(&self, rho: &[f64]) -> Option<usize> {
        let max = rho.iter().cloned().fold(0.0, f64::max);
        rho.iter().position(|r| !(*r >= RHO_FLOOR * max))
    }

    /// Time derivatives of `(rho, V)` at `s`, written into `out`.
    fn rates(&mut self, which: Option<usize>) {
        let s = match which {
            None => &self.state,
            Some(_) => &self.tmp,
        };
        let out_idx = which.map_or(0, |i| i + 1);
        let g = self.grid;
        let n = g.len();
        let dx = g.dx();
        log_amplitude_potential(&s.rho, &g, &self.cfg, &mut self.amp, &mut self.q);
        let inv_m = 1.0 / self.cfg.mass;
        for i in 0..n {
            self.g[i] = 0.5 * s.vel[i] * s.vel[i] + (self.potential[i] + self.q[i]) * inv_m;
        }
        let interfaces = g.n;
        for k in 0..interfaces {
            let r = if g.is_periodic() { (k + 1) % n } else { k + 1 };
            self.flux[k] = 0.5 * (s.rho[k] * s.vel[k] + s.rho[r] * s.vel[r]);
        }
        let out = &mut self.k[out_idx];
        out.rho.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..interfaces {
            let r = if g.is_periodic() { (k + 1) % n } else { k + 1 };
            out.rho[k] -= self.flux[k] / self.weights[k];
            out.rho[r] += self.flux[k] / self.weights[r];
        }
        let h2 = 2.0 * dx;
        for i in 1..n - 1 {
            out.vel[i] = -(self.g[i + 1] - self.g[i - 1]) / h2;
        }
        match g.boundary {
            Boundary::Periodic => {
                out.vel[0] = -(self.g[1] - self.g[n - 1]) / h2;
                out.vel[n - 1] = -(self.g[0] - self.g[n - 2]) / h2;
            }
            Boundary::Reflecting => {
                // End nodes are slaved to the interior by `extrapolate_ends`.
                out.rho[0] = 0.0;
                out.rho[n - 1] = 0.0;
                out.vel[0] = 0.0;
                out.vel[n - 1] = 0.0;
            }
        }
    }

    fn stage_input(&mut self, from: usize, factor: f64) {
        let h = factor * self.dt;
        let k = &self.k[from];
        for i in 0..self.state.rho.len() {
            self.tmp.rho[i] = self.state.rho[i] + h * k.rho[i];
            self.tmp.vel[i] = self.state.vel[i] + h * k.vel[i];
        }
        extrapolate_ends(&self.grid, &mut self.tmp);
    }

    /// One RK4 step. On failure the state is left at the last good step.
    pub fn step(&mut self) -> Result<()> {
        let bound = self.cfl_bound();
        if self.dt > bound {
            return Err(Error::StabilityBound { dt: self.dt, bound });
        }
        self.rates(None);
        self.stage_input(0, 0.5);
        self.rates(Some(0));
        self.stage_input(1, 0.5);
        self.rates(Some(1));
        self.stage_input(2, 1.0);
        self.rates(Some(2));
        let h = self.dt / 6.0;
        let [k1, k2, k3, k4] = &self.k;
        for i in 0..self.tmp.rho.len() {
            self.tmp.rho[i] = self.state.rho[i] + h * (k1.rho[i] + 2.0 * k2.rho[i] + 2.0 * k3.rho[i] + k4.rho[i]);
            self.tmp.vel[i] = self.state.vel[i] + h * (k1.vel[i] + 2.0 * k2.vel[i] + 2.0 * k3.vel[i] + k4.vel[i]);
        }
        extrapolate_ends(&self.grid, &mut self.tmp);
        if let Some(node) = self.find_node(&self.tmp.rho) {
            return Err(Error::NodeFormation {
                step: self.steps + 1,
                node,
            });
        }
        if let Some(node) = self.tmp.vel.iter().position(|v| !v.is_finite()) {
            return Err(Error::NodeFormation {
                step: self.steps + 1,
                node,
            });
        }
        std::mem::swap(&mut self.state, &mut self.tmp);
        self.steps += 1;
        self.time = self.steps as f64 * self.dt;
        Ok(())
    }

    pub fn run(&mut self, n_steps: usize) -> Result<()> {
        for _ in 0..n_steps {
            self.step()?;
        }
        Ok(())
    }

    /// Current state; the phase is rebuilt as `S = m ∫ V dx` with `S(x_min) = 0`.
    pub fn flow(&self) -> FlowState {
        let phase = cumulative(&self.state.vel, self.grid.dx())
            .into_iter()
            .map(|s| self.cfg.mass * s)
            .collect();
        FlowState {
            density: DensityField::from_conserved(self.grid, self.state.rho.clone()),
            velocity: self.state.vel.clone(),
            phase: Some(phase),
        }
    }
}

/// `n_steps` RK4 steps of the hydrodynamic equations.
pub fn madelung_propagate(
    flow: &FlowState,
    pot: &Potential,
    cfg: &PhysicalConfig,
    dt: f64,
    n_steps: usize,
) -> Result<FlowState> {
    let mut solver = MadelungSolver::new(flow, pot, cfg, dt)?;
    solver.run(n_steps)?;
    Ok(solver.flow())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wavenumbers_are_in_fft_order() {
        let g = Grid::periodic(0.0, std::f64::consts::TAU, 8).unwrap();
        assert_eq!(wavenumbers(&g), vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]);
    }

    #[test]
    fn split_step_needs_periodic_grid() {
        let g = Grid::reflecting(-1.0, 1.0, 16).unwrap();
        let psi = WaveFunction::gaussian(g, 0.0, 0.2, 0.0).unwrap();
        assert_eq!(
            split_step_propagate(&psi, &Potential::Free, &PhysicalConfig::default(), 0.1, 1).unwrap_err(),
            Error::NonPeriodicGrid
        );
    }

    #[test]
    fn compare_rejects_grid_mismatch() {
        let a = DensityField::uniform(Grid::periodic(0.0, 1.0, 16).unwrap());
        let b = DensityField::uniform(Grid::periodic(0.0, 1.0, 32).unwrap());
        assert_eq!(compare_densities(&a, &b), Err(Error::GridMismatch));
    }
}
