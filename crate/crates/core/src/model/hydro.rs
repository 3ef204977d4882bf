//! Pointwise hydrodynamic quantities of a density field: the Bohm quantum
//! potential, the osmotic (Fick) velocity, the mean stochastic acceleration,
//! and the Madelung change of variables between `psi` and `(rho, S)`.

use num_complex::Complex64;

use super::calculus::{cumulative, d1};
use super::config::PhysicalConfig;
use super::field::{DensityField, FlowState, WaveFunction};
use super::grid::Boundary;
use crate::error::{Error, Result};

/// Relative density floor applied before `sqrt`, `ln` and division.
pub const RHO_FLOOR: f64 = 1e-12;

/// `max(rho_i, RHO_FLOOR * max(rho))` for every node.
pub fn floored(rho: &[f64]) -> Vec<f64> {
    let eps = RHO_FLOOR * rho.iter().cloned().fold(0.0, f64::max);
    rho.iter().map(|&r| r.max(eps)).collect()
}

fn check_finite(values: Vec<f64>) -> Result<Vec<f64>> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(node) => Err(Error::DegenerateDensity { node }),
        None => Ok(values),
    }
}

/// Bohm quantum potential `Q = -hbar^2 (sqrt rho)'' / (2 m sqrt rho)`.
pub fn quantum_potential(rho: &DensityField, cfg: &PhysicalConfig) -> Result<Vec<f64>> {
    quantum_potential_raw(rho.values(), rho.grid(), cfg)
}

pub(crate) fn quantum_potential_raw(
    rho: &[f64],
    grid: &super::grid::Grid,
    cfg: &PhysicalConfig,
) -> Result<Vec<f64>> {
    let mut amp = vec![0.0; rho.len()];
    let mut out = vec![0.0; rho.len()];
    quantum_potential_into(rho, grid, cfg, &mut amp, &mut out)?;
    Ok(out)
}

/// Allocation-free kernel behind [`quantum_potential`]; `amp` is scratch space.
pub(crate) fn quantum_potential_into(
    rho: &[f64],
    grid: &super::grid::Grid,
    cfg: &PhysicalConfig,
    amp: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    let n = rho.len();
    let eps = RHO_FLOOR * rho.iter().cloned().fold(0.0, f64::max);
    for (a, r) in amp.iter_mut().zip(rho) {
        *a = r.max(eps).sqrt();
    }
    let hh = grid.dx() * grid.dx();
    let scale = -cfg.hbar * cfg.hbar / (2.0 * cfg.mass * hh);
    for i in 1..n - 1 {
        out[i] = scale * (amp[i + 1] - 2.0 * amp[i] + amp[i - 1]) / amp[i];
    }
    match grid.boundary {
        Boundary::Periodic => {
            out[0] = scale * (amp[1] - 2.0 * amp[0] + amp[n - 1]) / amp[0];
            out[n - 1] = scale * (amp[0] - 2.0 * amp[n - 1] + amp[n - 2]) / amp[n - 1];
        }
        Boundary::Reflecting => {
            out[0] = scale * (2.0 * amp[0] - 5.0 * amp[1] + 4.0 * amp[2] - amp[3]) / amp[0];
            out[n - 1] = scale
                * (2.0 * amp[n - 1] - 5.0 * amp[n - 2] + 4.0 * amp[n - 3] - amp[n - 4])
                / amp[n - 1];
        }
    }
    match out.iter().position(|v| !v.is_finite()) {
        Some(node) => Err(Error::DegenerateDensity { node }),
        None => Ok(()),
    }
}

/// Osmotic velocity from the Fick closure `rho W = -D d(rho)/dx`.
pub fn osmotic_velocity(rho: &DensityField, cfg: &PhysicalConfig) -> Result<Vec<f64>> {
    let r = floored(rho.values());
    let grad = d1(&r, rho.grid());
    let dcoef = cfg.diffusion();
    check_finite(grad.iter().zip(&r).map(|(g, r)| -dcoef * g / r).collect())
}

/// Minimum interval count for the nested third difference.
pub const MIN_THIRD_DIFF_INTERVALS: usize = 16;

/// Mean stochastic acceleration density `d/dx [D d/dx (D d(rho)/dx)]`,
/// i.e. `D^2 rho'''` in one dimension, by nested central differences.
pub fn mean_stochastic_acceleration(rho: &DensityField, cfg: &PhysicalConfig) -> Result<Vec<f64>> {
    let grid = rho.grid();
    if grid.n < MIN_THIRD_DIFF_INTERVALS {
        return Err(Error::GridTooCoarse {
            n: grid.n,
            min: MIN_THIRD_DIFF_INTERVALS,
        });
    }
    let dcoef = cfg.diffusion();
    let r = floored(rho.values());
    let g1: Vec<f64> = d1(&r, grid).into_iter().map(|v| dcoef * v).collect();
    let g2: Vec<f64> = d1(&g1, grid).into_iter().map(|v| dcoef * v).collect();
    check_finite(d1(&g2, grid))
}

/// Both sides of the hydrodynamic closure identity
/// `(D (D rho')')' - (rho W^2)' = 2 rho D (D (sqrt rho)'' / sqrt rho)'`.
///
/// The left side uses the mean stochastic acceleration and the osmotic
/// velocity; the right side uses the quantum potential through
/// `D (sqrt rho)''/sqrt rho = -Q / hbar`.
pub fn closure_sides(rho: &DensityField, cfg: &PhysicalConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = rho.grid();
    let accel = mean_stochastic_acceleration(rho, cfg)?;
    let w = osmotic_velocity(rho, cfg)?;
    let r = floored(rho.values());
    let rw2: Vec<f64> = r.iter().zip(&w).map(|(r, w)| r * w * w).collect();
    let drw2 = d1(&rw2, grid);
    let lhs = accel.iter().zip(&drw2).map(|(a, b)| a - b).collect();

    let q = quantum_potential(rho, cfg)?;
    let dcoef = cfg.diffusion();
    let inner: Vec<f64> = q.iter().map(|q| -q / cfg.hbar).collect();
    let dinner = d1(&inner, grid);
    let rhs = r
        .iter()
        .zip(&dinner)
        .map(|(r, g)| 2.0 * r * dcoef * g)
        .collect();
    Ok((lhs, rhs))
}

/// Splits `psi` into density, velocity potential and velocity.
///
/// The phase is unwrapped by accumulating principal-branch increments along the
/// grid, with `S(x_min) = 0`.
pub fn madelung_decompose(psi: &WaveFunction, cfg: &PhysicalConfig) -> Result<FlowState> {
    let grid = *psi.grid();
    let vals = psi.values();
    let n = vals.len();
    let prob = psi.probability();
    let eps = RHO_FLOOR * prob.iter().cloned().fold(0.0, f64::max);
    let interior = match grid.boundary {
        Boundary::Periodic => 0..n,
        Boundary::Reflecting => 1..n - 1,
    };
    for i in interior {
        if prob[i] < eps {
            return Err(Error::NodeDetected { node: i });
        }
    }

    // Phase increment between consecutive nodes; on periodic grids the last
    // entry closes the loop.
    let incr = |a: Complex64, b: Complex64| (b * a.conj()).arg();
    let steps: Vec<f64> = (0..n)
        .map(|i| {
            if i + 1 < n {
                incr(vals[i], vals[i + 1])
            } else {
                incr(vals[n - 1], vals[0])
            }
        })
        .collect();

    let mut phase = Vec::with_capacity(n);
    let mut acc = 0.0;
    phase.push(0.0);
    for s in &steps[..n - 1] {
        acc += s;
        phase.push(cfg.hbar * acc);
    }

    let dx = grid.dx();
    let scale = cfg.hbar / (2.0 * dx * cfg.mass);
    let mut velocity = vec![0.0; n];
    for i in 1..n - 1 {
        velocity[i] = scale * (steps[i - 1] + steps[i]);
    }
    match grid.boundary {
        Boundary::Periodic => {
            velocity[0] = scale * (steps[n - 1] + steps[0]);
            velocity[n - 1] = scale * (steps[n - 2] + steps[n - 1]);
        }
        Boundary::Reflecting => {
            velocity[0] = scale * (3.0 * steps[0] - steps[1]);
            velocity[n - 1] = scale * (3.0 * steps[n - 2] - steps[n - 3]);
        }
    }

    Ok(FlowState {
        density: DensityField::new(grid, prob)?,
        velocity,
        phase: Some(phase),
    })
}

/// `psi = sqrt(rho) exp(i S / hbar)`, renormalized.
///
/// A missing phase is rebuilt from the velocity as `S = m ∫ V dx`.
pub fn madelung_compose(flow: &FlowState, cfg: &PhysicalConfig) -> WaveFunction {
    let grid = *flow.grid();
    let phase = match &flow.phase {
        Some(s) => s.clone(),
        None => cumulative(&flow.velocity, grid.dx())
            .into_iter()
            .map(|s| cfg.mass * s)
            .collect(),
    };
    let values = flow
        .density
        .values()
        .iter()
        .zip(&phase)
        .map(|(r, s)| Complex64::from_polar(r.sqrt(), s / cfg.hbar))
        .collect();
    WaveFunction::new(grid, values).expect("normalized density composes to a valid wave function")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::grid::Grid;
    use std::f64::consts::{PI, TAU};

    fn unit() -> PhysicalConfig {
        PhysicalConfig::new(1.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn gaussian(n: usize) -> DensityField {
        let g = Grid::periodic(-8.0, 8.0, n).unwrap();
        DensityField::gaussian(g, 0.0, 1.0).unwrap()
    }

    #[test]
    fn quantum_potential_of_unit_gaussian() {
        // sqrt(rho) ~ exp(-x^2/4): Q = 1/4 - x^2/8.
        let rho = gaussian(2048);
        let q = quantum_potential(&rho, &unit()).unwrap();
        let g = rho.grid();
        let mid = g.len() / 2;
        assert!((g.x(mid)).abs() < 1e-12);
        assert!((q[mid] - 0.25).abs() < 1e-5);
        for i in (mid - 400..mid + 400).step_by(37) {
            let x = g.x(i);
            assert!((q[i] - (0.25 - x * x / 8.0)).abs() < 1e-4, "x={x}");
        }
    }

    #[test]
    fn uniform_density_has_no_quantum_potential_or_osmotic_flow() {
        let g = Grid::periodic(0.0, 3.0, 32).unwrap();
        let rho = DensityField::uniform(g);
        assert!(quantum_potential(&rho, &unit()).unwrap().iter().all(|q| *q == 0.0));
        assert!(osmotic_velocity(&rho, &unit()).unwrap().iter().all(|w| *w == 0.0));
        assert!(mean_stochastic_acceleration(&rho, &unit())
            .unwrap()
            .iter()
            .all(|a| *a == 0.0));
    }

    #[test]
    fn osmotic_velocity_of_gaussian_and_exponential() {
        let rho = gaussian(4096);
        let w = osmotic_velocity(&rho, &unit()).unwrap();
        let g = rho.grid();
        let i1 = g.len() / 2 + (1.0 / g.dx()).round() as usize;
        assert!((g.x(i1) - 1.0).abs() < 1e-12);
        assert!((w[i1] - 0.5).abs() < 1e-5);

        // rho ~ exp(-x / lambda): W = D / lambda away from the ends.
        let lambda = 0.8;
        let r = Grid::reflecting(0.0, 4.0, 400).unwrap();
        let rho = DensityField::from_fn(r, |x| (-x / lambda).exp()).unwrap();
        let w = osmotic_velocity(&rho, &unit()).unwrap();
        for v in &w[1..400] {
            assert!((v - 0.5 / lambda).abs() < 1e-3);
        }
    }

    #[test]
    fn mean_stochastic_acceleration_of_gaussian() {
        let rho = gaussian(4096);
        let a = mean_stochastic_acceleration(&rho, &unit()).unwrap();
        let g = rho.grid();
        let mid = g.len() / 2;
        assert!(a[mid].abs() < 1e-12);
        let i1 = mid + (1.0 / g.dx()).round() as usize;
        let rho1 = (-0.5f64).exp() / (2.0 * PI).sqrt();
        assert!((a[i1] - 0.25 * rho1 * 2.0).abs() < 1e-4);
    }

    #[test]
    fn coarse_grid_rejected_for_third_difference() {
        let g = Grid::periodic(0.0, 1.0, 12).unwrap();
        let rho = DensityField::uniform(g);
        assert!(matches!(
            mean_stochastic_acceleration(&rho, &unit()),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn plane_wave_velocity() {
        let g = Grid::periodic(0.0, 5.0, 64).unwrap();
        let k = TAU / 5.0;
        let psi = WaveFunction::from_fn(g, |x| Complex64::from_polar(1.0, k * x)).unwrap();
        let flow = madelung_decompose(&psi, &unit()).unwrap();
        for v in &flow.velocity {
            assert!((v - k).abs() < 1e-12);
        }
        let back = madelung_compose(&flow, &unit());
        assert!(back.distance(&psi).unwrap() < 1e-12);
    }

    #[test]
    fn real_gaussian_has_zero_phase() {
        let g = Grid::reflecting(-5.0, 5.0, 200).unwrap();
        let psi = WaveFunction::gaussian(g, 0.0, 1.0, 0.0).unwrap();
        let flow = madelung_decompose(&psi, &unit()).unwrap();
        assert!(flow.velocity.iter().all(|v| *v == 0.0));
        assert!(flow.phase.unwrap().iter().all(|s| *s == 0.0));
    }

    #[test]
    fn nodes_are_rejected() {
        let g = Grid::reflecting(-5.0, 5.0, 200).unwrap();
        let psi = WaveFunction::from_fn(g, |x| Complex64::new(x * (-x * x / 2.0).exp(), 0.0)).unwrap();
        assert!(matches!(
            madelung_decompose(&psi, &unit()),
            Err(Error::NodeDetected { node: 100 })
        ));
    }
}
