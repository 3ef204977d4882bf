use qsmolu_core::dispersion::{
    covariance_from_eta, diagonal_ansatz_residual, eta_implicit, log_beta_grid, solve_eta_approx,
    solve_eta_family,
};
use qsmolu_core::model::PhysicalConfig;

fn unit() -> PhysicalConfig {
    PhysicalConfig::default()
}

/// Left side of the implicit relation, evaluated directly.
fn implicit_lhs(eta: f64, beta: f64, hbar: f64) -> f64 {
    let a = hbar * hbar * beta / 4.0;
    eta - a * (eta / a).ln_1p()
}

#[test]
fn implicit_root_satisfies_relation() {
    let cfg = unit().with_gamma(0.7).with_hbar(1.3);
    for beta in [0.1, 1.0, 10.0] {
        for t in [0.01, 0.5, 3.0, 40.0] {
            let eta = eta_implicit(t, beta, &cfg).unwrap();
            let rhs = 2.0 * t / (cfg.gamma * beta);
            assert!((implicit_lhs(eta, beta, cfg.hbar) - rhs).abs() < 1e-10 * rhs.max(1.0));
        }
    }
}

#[test]
fn implicit_root_is_quantum_subdiffusive_when_cold() {
    let cfg = unit();
    let mut t = 1e-3;
    while t <= 1.0 {
        let eta = eta_implicit(t, 1e6, &cfg).unwrap();
        let q = (t / cfg.gamma).sqrt() * cfg.hbar;
        assert!((eta - q).abs() < 0.01 * q, "t={t}");
        t *= 1.5;
    }
}

#[test]
fn implicit_root_follows_einstein_when_hot() {
    let cfg = unit();
    let beta = 1e-3;
    let ratio = |t: f64| eta_implicit(t, beta, &cfg).unwrap() * cfg.gamma * beta / (2.0 * t);
    assert!((ratio(100.0) - 1.0).abs() < 0.01);
    assert!((ratio(1e4) - 1.0).abs() < (ratio(100.0) - 1.0).abs());
}

#[test]
fn infinite_beta_and_zero_hbar_limits() {
    let cfg = unit().with_gamma(2.0);
    assert_eq!(eta_implicit(2.0, f64::INFINITY, &cfg).unwrap(), 1.0);
    let classical = eta_implicit(3.0, 0.5, &cfg.with_hbar(1e-9)).unwrap();
    assert!((classical - 6.0).abs() < 1e-12);
}

#[test]
fn ode_reduction_agrees_with_implicit_root() {
    let cfg = unit();
    let curve = solve_eta_approx(&cfg, 1.0, 10.0, 1e-4).unwrap();
    for t in [0.1, 1.0, 10.0] {
        let root = eta_implicit(t, 1.0, &cfg).unwrap();
        let ode = curve.at(t);
        assert!((ode - root).abs() < 1e-6 * root, "t={t} {ode} {root}");
    }
}

#[test]
fn ode_reduction_closed_forms() {
    let cfg = unit().with_gamma(1.5);
    let classical = solve_eta_approx(&cfg.with_hbar(1e-9), 0.4, 5.0, 1e-3).unwrap();
    for (t, e) in classical.times.iter().zip(&classical.eta) {
        assert!((e - 2.0 * t / (1.5 * 0.4)).abs() < 1e-9 * (1.0 + t));
    }
    let quantum = solve_eta_approx(&cfg, f64::INFINITY, 5.0, 1e-4).unwrap();
    for t in [0.01, 0.1, 1.0, 5.0] {
        let exact = (t / cfg.gamma).sqrt();
        assert!((quantum.at(t) - exact).abs() < 1e-6 * exact, "t={t} {}", quantum.at(t) / exact - 1.0);
    }
}

#[test]
fn reduction_is_bracketed_by_its_two_limits() {
    // 2 gamma eta' exceeds each source alone and the sum of the two closed forms
    // is a supersolution.
    let cfg = unit();
    for beta in [0.1, 1.0, 10.0] {
        for t in [0.01, 0.3, 2.0, 20.0] {
            let eta = eta_implicit(t, beta, &cfg).unwrap();
            let c = 2.0 * t / (cfg.gamma * beta);
            let q = cfg.hbar * (t / cfg.gamma).sqrt();
            assert!(eta >= c.max(q) && eta <= c + q, "beta={beta} t={t}");
        }
    }
}

#[test]
fn variance_grows_with_temperature() {
    let t = 2.0;
    let mut last = 0.0;
    for kt in [0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 10.0] {
        let cfg = unit().with_kt(kt);
        let eta = eta_implicit(t, cfg.beta(), &cfg).unwrap();
        let sigma = covariance_from_eta(eta, &cfg).unwrap();
        assert!(sigma > last, "kT={kt}");
        last = sigma;
    }
}

#[test]
fn covariance_of_classical_dispersion_is_einstein_law() {
    let cfg = unit().with_mass(2.0).with_kt(0.5).with_gamma(3.0).with_hbar(1e-9);
    let t = 4.0;
    let eta = eta_implicit(t, cfg.beta(), &cfg).unwrap();
    let sigma = covariance_from_eta(eta, &cfg).unwrap();
    let einstein = 2.0 * cfg.kt * t / (cfg.gamma * cfg.mass);
    assert!((sigma - einstein).abs() < 1e-9 * einstein);
}

#[test]
fn family_limits_and_consistency() {
    let cfg = unit();
    let beta_max = 10.0;
    let grid = log_beta_grid(beta_max, 61).unwrap();
    let family = solve_eta_family(&cfg, &grid, 200.0, 1e-3).unwrap();
    assert!(family.endpoint_bound < 1e-3, "{}", family.endpoint_bound);
    assert!(family.quadrature_error < 1e-2, "{}", family.quadrature_error);

    for j in 0..grid.len() {
        let col = family.column(j);
        assert!(col.eta.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(col.eta[0], 0.0);
    }

    // Small times: every column is in the quantum regime.
    let top = family.column(grid.len() - 1);
    for t in [1e-3, 2e-3, 5e-3] {
        let q = cfg.hbar * (t / cfg.gamma).sqrt();
        assert!((top.at(t) - q).abs() < 0.05 * q, "t={t}");
    }

    // Large times at the hottest column: Einstein law.
    let hot = family.column(0);
    let t = 200.0;
    let einstein = 2.0 * t / (cfg.gamma * grid[0]);
    assert!((hot.at(t) / einstein - 1.0).abs() < 0.02);

    // Implicit relation reproduces 2 t / (gamma beta) in both regimes.
    for (j, t) in [(0, 200.0), (grid.len() - 1, 1e-3)] {
        let col = family.column(j);
        let beta = grid[j];
        let rhs = 2.0 * t / (cfg.gamma * beta);
        let lhs = implicit_lhs(col.at(t), beta, cfg.hbar);
        assert!((lhs / rhs - 1.0).abs() < 0.02, "column {j}: {lhs} vs {rhs}");
    }
}

#[test]
fn family_lies_between_einstein_law_and_reduction() {
    let cfg = unit();
    let grid = log_beta_grid(2.0, 41).unwrap();
    let family = solve_eta_family(&cfg, &grid, 5.0, 1e-3).unwrap();
    for j in [0, 20, 40] {
        let col = family.column(j);
        for t in [0.1, 1.0, 5.0] {
            let einstein = 2.0 * t / (cfg.gamma * grid[j]);
            let reduced = eta_implicit(t, grid[j], &cfg).unwrap();
            let eta = col.at(t);
            assert!(eta >= einstein * (1.0 - 1e-9) && eta <= reduced * (1.0 + 1e-6), "j={j} t={t}");
        }
    }
}

#[test]
fn ansatz_residual_shrinks_under_refinement() {
    let cfg = unit();
    let run = |nb: usize, dt: f64| {
        let grid = log_beta_grid(1.0, nb).unwrap();
        let family = solve_eta_family(&cfg, &grid, 2.0, dt).unwrap();
        diagonal_ansatz_residual(&family, &cfg, 0.5).unwrap()
    };
    let coarse = run(21, 2e-2);
    let fine = run(41, 1e-2);
    assert!(fine < coarse / 2.0, "{coarse} {fine}");
}
