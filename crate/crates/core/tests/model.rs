use num_complex::Complex64;
use proptest::prelude::*;
use qsmolu_core::model::{
    madelung_compose, madelung_decompose, osmotic_velocity, quantum_potential, DensityField, Grid, PhysicalConfig,
    WaveFunction,
};

fn cfg(hbar: f64, mass: f64) -> PhysicalConfig {
    PhysicalConfig::default().with_hbar(hbar).with_mass(mass)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fold_lands_in_domain(x in -1e3f64..1e3, lo in -5.0f64..0.0, len in 0.5f64..10.0, periodic in any::<bool>()) {
        let g = if periodic { Grid::periodic(lo, lo + len, 32) } else { Grid::reflecting(lo, lo + len, 32) }.unwrap();
        let y = g.fold(x);
        prop_assert!(y >= g.x_min - 1e-9 && y <= g.x_max + 1e-9);
        if (g.x_min..=g.x_max).contains(&x) && !(periodic && x == g.x_max) {
            prop_assert!((y - x).abs() < 1e-9);
        }
    }

    #[test]
    fn densities_are_normalized(c in -2.0f64..2.0, s in 0.3f64..1.5) {
        let g = Grid::reflecting(-10.0, 10.0, 800).unwrap();
        let rho = DensityField::gaussian(g, c, s).unwrap();
        prop_assert!((rho.mass() - 1.0).abs() < 1e-12);
    }

    // sqrt(rho) ~ exp(-(x-c)^2 / 4s^2): Q = hbar^2/(8 m s^2) (2 - (x-c)^2/s^2).
    #[test]
    fn quantum_potential_of_gaussians(c in -1.0f64..1.0, s in 0.6f64..1.4, hbar in 0.5f64..2.0, m in 0.5f64..2.0) {
        let g = Grid::periodic(-12.0, 12.0, 4096).unwrap();
        let rho = DensityField::gaussian(g, c, s).unwrap();
        let q = quantum_potential(&rho, &cfg(hbar, m)).unwrap();
        for i in (0..g.len()).step_by(41) {
            let u = (g.x(i) - c) / s;
            if u.abs() < 3.0 {
                let exact = hbar * hbar / (8.0 * m * s * s) * (2.0 - u * u);
                prop_assert!((q[i] - exact).abs() < 1e-3 * (1.0 + exact.abs()), "x={} {} {}", g.x(i), q[i], exact);
            }
        }
    }

    // W = -D d ln(rho)/dx = D (x-c)/s^2 with D = hbar/2m.
    #[test]
    fn osmotic_velocity_of_gaussians(c in -1.0f64..1.0, s in 0.6f64..1.4, hbar in 0.5f64..2.0, m in 0.5f64..2.0) {
        let g = Grid::periodic(-12.0, 12.0, 4096).unwrap();
        let rho = DensityField::gaussian(g, c, s).unwrap();
        let p = cfg(hbar, m);
        let w = osmotic_velocity(&rho, &p).unwrap();
        for i in (0..g.len()).step_by(41) {
            let u = (g.x(i) - c) / s;
            if u.abs() < 3.0 {
                let exact = p.diffusion() * (g.x(i) - c) / (s * s);
                prop_assert!((w[i] - exact).abs() < 1e-3 * (1.0 + exact.abs()));
            }
        }
    }

    #[test]
    fn madelung_round_trip(c in -0.5f64..0.5, s in 0.9f64..1.2, k in -3.0f64..3.0) {
        let g = Grid::periodic(-4.0, 4.0, 512).unwrap();
        let p = cfg(1.0, 1.0);
        let psi = WaveFunction::from_fn(g, |x| {
            Complex64::from_polar((-(x - c).powi(2) / (4.0 * s * s)).exp(), k * x + 0.3 * (x - c).powi(2))
        })
        .unwrap();
        let back = madelung_compose(&madelung_decompose(&psi, &p).unwrap(), &p);
        // Equal up to the global phase fixed by S(x_min) = 0.
        let phase = psi.values()[0] / back.values()[0];
        let phase = phase / phase.norm();
        let aligned = WaveFunction::new(g, back.values().iter().map(|z| z * phase).collect()).unwrap();
        prop_assert!(aligned.distance(&psi).unwrap() < 1e-8);
    }
}
