use qsmolu_core::model::{DensityField, Grid, PhysicalConfig, Potential};
use qsmolu_core::smoluchowski::{
    boltzmann_density, classical_free_energy, evolve, step_classical, step_quantum_t0, Dynamics,
    Stepper,
};

fn unit() -> PhysicalConfig {
    PhysicalConfig::default()
}

fn l1(a: &DensityField, b: &DensityField) -> f64 {
    let d: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).collect();
    a.grid().integrate(&d)
}

#[test]
fn free_variance_grows_at_einstein_rate() {
    let grid = Grid::reflecting(-10.0, 10.0, 400).unwrap();
    let rho = DensityField::gaussian(grid, 0.0, 0.5).unwrap();
    let cfg = unit().with_kt(0.7).with_gamma(2.0);
    let dt = 1e-3;
    let snaps = evolve(&rho, &Potential::Free, &cfg, Dynamics::Classical, dt, 1000, 250).unwrap();
    let rate = 2.0 * cfg.kt / (cfg.gamma * cfg.mass);
    for s in &snaps {
        let expected = 0.25 + rate * s.t;
        assert!(
            (s.density.variance() - expected).abs() < 2e-3 * expected,
            "t={} var={} expected={}",
            s.t,
            s.density.variance(),
            expected
        );
    }
}

#[test]
fn free_spreading_matches_heat_kernel() {
    let run = |n: usize| {
        let grid = Grid::reflecting(-10.0, 10.0, n).unwrap();
        let rho = DensityField::gaussian(grid, 0.0, 0.5).unwrap();
        let dx = grid.dx();
        let dt = 0.2 * dx * dx;
        let steps = (1.0 / dt).round() as usize;
        let snaps = evolve(&rho, &Potential::Free, &unit(), Dynamics::Classical, dt, steps, steps).unwrap();
        let last = snaps.last().unwrap();
        let exact = DensityField::gaussian(grid, 0.0, (0.25 + 2.0 * last.t).sqrt()).unwrap();
        l1(&last.density, &exact)
    };
    let coarse = run(200);
    let fine = run(400);
    assert!(coarse < 2e-3, "{coarse}");
    assert!(fine < coarse / 3.0, "{coarse} {fine}");
}

#[test]
fn harmonic_relaxation_follows_ornstein_uhlenbeck_variance() {
    let grid = Grid::reflecting(-6.0, 6.0, 480).unwrap();
    let omega = 1.3;
    let pot = Potential::Harmonic { omega };
    let cfg = unit().with_gamma(1.5);
    let rho = DensityField::gaussian(grid, 0.0, 0.4).unwrap();
    let dt = 2e-4;
    let snaps = evolve(&rho, &pot, &cfg, Dynamics::Classical, dt, 10_000, 1000).unwrap();
    let var_eq = cfg.kt / (cfg.mass * omega * omega);
    let rate = 2.0 * omega * omega / cfg.gamma;
    for s in &snaps {
        let expected = var_eq + (0.16 - var_eq) * (-rate * s.t).exp();
        let got = s.density.variance();
        assert!((got - expected).abs() < 1e-3, "t={} {got} {expected}", s.t);
    }
}

#[test]
fn free_energy_never_increases() {
    let grid = Grid::reflecting(-4.0, 4.0, 160).unwrap();
    let pot = Potential::DoubleWell {
        barrier: 2.0,
        separation: 3.0,
    };
    let rho = DensityField::gaussian(grid, 0.8, 0.3).unwrap();
    let snaps = evolve(&rho, &pot, &unit(), Dynamics::Classical, 2e-4, 20_000, 200).unwrap();
    let f: Vec<f64> = snaps
        .iter()
        .map(|s| classical_free_energy(&s.density, &pot, &unit()).unwrap())
        .collect();
    for w in f.windows(2) {
        assert!(w[1] <= w[0] + 1e-13, "{} -> {}", w[0], w[1]);
    }
    let eq = boltzmann_density(&grid, &pot, &unit()).unwrap();
    let f_eq = classical_free_energy(&eq, &pot, &unit()).unwrap();
    assert!(f.last().unwrap() >= &(f_eq - 1e-12));
}

#[test]
fn boltzmann_minimizes_free_energy() {
    let grid = Grid::reflecting(-4.0, 4.0, 200).unwrap();
    let pot = Potential::Harmonic { omega: 1.0 };
    let eq = boltzmann_density(&grid, &pot, &unit()).unwrap();
    let f_eq = classical_free_energy(&eq, &pot, &unit()).unwrap();
    for k in 1..6 {
        for amp in [-0.3, -0.05, 0.05, 0.3] {
            let perturbed = DensityField::new(
                grid,
                eq.values()
                    .iter()
                    .zip(grid.points())
                    .map(|(r, x)| r * (1.0 + amp * (k as f64 * x).sin()))
                    .collect(),
            )
            .unwrap();
            assert!(classical_free_energy(&perturbed, &pot, &unit()).unwrap() > f_eq);
        }
    }
}

#[test]
fn mass_is_conserved_and_density_stays_positive() {
    let grid = Grid::reflecting(-5.0, 5.0, 100).unwrap();
    let pot = Potential::DoubleWell {
        barrier: 1.0,
        separation: 2.5,
    };
    for (dynamics, dt) in [(Dynamics::Classical, 2e-4), (Dynamics::QuantumT0, 2e-5)] {
        let mut stepper = Stepper::new(grid, &pot, &unit(), dynamics, dt).unwrap();
        let mut rho = DensityField::gaussian(grid, 1.0, 0.6).unwrap().into_values();
        for _ in 0..2000 {
            let before = grid.integrate(&rho);
            stepper.step(&mut rho).unwrap();
            assert!((grid.integrate(&rho) - before).abs() < 1e-12);
        }
        assert!(rho.iter().all(|r| *r >= 0.0), "{dynamics:?}");
    }
}

#[test]
fn periodic_classical_step_conserves_mass() {
    let grid = Grid::periodic(0.0, 1.0, 64).unwrap();
    let rho = DensityField::from_fn(grid, |x| 1.0 + 0.5 * (std::f64::consts::TAU * x).cos()).unwrap();
    let tab = qsmolu_core::model::TabulatedPotential::new(
        grid,
        grid.points().iter().map(|x| (std::f64::consts::TAU * x).sin()).collect(),
    )
    .unwrap();
    let out = step_classical(&rho, &Potential::Tabulated(tab), &unit(), 1e-4).unwrap();
    assert!((out.mass() - 1.0).abs() < 1e-13);
}

/// Ground state of the unit harmonic trap: Gaussian of variance 1/2.
fn ground_state(grid: Grid) -> DensityField {
    DensityField::gaussian(grid, 0.0, 0.5f64.sqrt()).unwrap()
}

#[test]
fn quantum_ground_state_is_stationary() {
    let grid = Grid::reflecting(-5.2, 5.2, 208).unwrap();
    let pot = Potential::Harmonic { omega: 1.0 };
    let rho = ground_state(grid);
    let dt = 0.9 * grid.dx().powi(4) / 2.0;
    let steps = (10.0 / dt).ceil() as usize;
    let snaps = evolve(&rho, &pot, &unit().with_kt(0.0), Dynamics::QuantumT0, dt, steps, steps / 10).unwrap();
    let v0 = rho.variance();
    for s in &snaps {
        let drift = (s.density.variance() - v0).abs() / v0;
        assert!(drift < 1e-3, "t={} drift={drift}", s.t);
    }
}

#[test]
fn quantum_stationary_residual_is_second_order() {
    let residual = |n: usize| {
        let grid = Grid::reflecting(-5.2, 5.2, n).unwrap();
        let pot = Potential::Harmonic { omega: 1.0 };
        let rho = ground_state(grid);
        let dt = 0.5 * grid.dx().powi(4) / 2.0;
        let next = step_quantum_t0(&rho, &pot, &unit(), dt).unwrap();
        l1(&next, &rho) / dt
    };
    let ratio = residual(104) / residual(208);
    assert!(ratio > 3.0 && ratio < 5.0, "ratio {ratio}");
}

#[test]
fn quantum_free_spreading_is_subdiffusive() {
    let grid = Grid::reflecting(-12.0, 12.0, 240).unwrap();
    let s0: f64 = 0.25;
    let rho = DensityField::gaussian(grid, 0.0, s0.sqrt()).unwrap();
    let dt = 0.9 * grid.dx().powi(4) / 2.0;
    let steps = (8.0 / dt).ceil() as usize;
    let snaps = evolve(&rho, &Potential::Free, &unit().with_kt(0.0), Dynamics::QuantumT0, dt, steps, steps / 8).unwrap();
    for s in snaps.iter().filter(|s| s.t >= 2.0) {
        let var = s.density.variance();
        let ansatz = (s0 * s0 + s.t).sqrt();
        assert!((var - ansatz).abs() < 5e-3 * ansatz, "t={} {var} {ansatz}", s.t);
        assert!((var - s.t.sqrt()).abs() < 0.05 * s.t.sqrt());
    }
}
