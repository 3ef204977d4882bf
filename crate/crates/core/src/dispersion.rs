//! Free-particle dispersion dynamics of the overdamped quantum equation.
//!
//! The position variance of a free Gaussian is `Sigma = eta / m`. Three routes
//! to `eta(t, beta)` are provided:
//!
//! * [`solve_eta_family`]: the coupled family
//!   `2 beta gamma d_t eta = 4 + eta ∫_0^beta (hbar / eta(t, b))^2 db`,
//!   integrated jointly over a grid of reciprocal temperatures;
//! * [`solve_eta_approx`]: the single-column reduction
//!   `2 gamma d_t eta = 4 / beta + hbar^2 / eta`;
//! * [`eta_implicit`]: the exact integral of the reduction,
//!   `eta - (hbar^2 beta / 4) ln(1 + 4 eta / (hbar^2 beta)) = 2 t / (gamma beta)`.
//!
//! All start from `eta(0) = 0`, where `hbar^2 / eta` is singular. The ODE
//! routes seed the small-time expansion `eta ≈ hbar sqrt(t / gamma) + 4 t / (3 gamma beta)`
//! at a time `t0` far below the quantum-classical crossover and reach the
//! first grid time `dt` with geometrically growing RK4 substeps.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::PhysicalConfig;

/// Smallest grid temperature relative to the largest in [`log_beta_grid`].
pub const BETA_MIN_RATIO: f64 = 1e-3;

fn check_dt(t_max: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be finite and > 0"));
    }
    if !(t_max >= dt && t_max.is_finite()) {
        return Err(invalid("t_max", "must be finite and at least dt"));
    }
    Ok((t_max / dt).round() as usize)
}

fn check_dispersion_cfg(cfg: &PhysicalConfig) -> Result<()> {
    cfg.validate()?;
    if !(cfg.gamma > 0.0) {
        return Err(invalid("gamma", "dispersion dynamics needs gamma > 0"));
    }
    Ok(())
}

/// Small-time expansion of the reduced equation.
fn small_time(t: f64, beta: f64, cfg: &PhysicalConfig) -> f64 {
    cfg.hbar * (t / cfg.gamma).sqrt() + 4.0 * t / (3.0 * cfg.gamma * beta)
}

/// Seed time: well below both `dt` and the crossover `hbar^2 beta^2 gamma / 4`
/// of the hottest column, where the expansion error is negligible.
fn seed_time(beta_min: f64, cfg: &PhysicalConfig, dt: f64) -> f64 {
    let crossover = 0.25 * cfg.hbar * cfg.hbar * beta_min * beta_min * cfg.gamma;
    (1e-6 * crossover).min(1e-3 * dt)
}

const STARTUP_GROWTH: f64 = 1.1;

fn rk4_step(
    rate: &mut impl FnMut(&[f64], &mut [f64]),
    y: &mut [f64],
    h: f64,
    k: &mut [Vec<f64>; 5],
) {
    let [k1, k2, k3, k4, tmp] = k;
    rate(y, k1);
    tmp.iter_mut().zip(y.iter()).zip(k1.iter()).for_each(|((s, y), k)| *s = y + 0.5 * h * k);
    rate(tmp, k2);
    tmp.iter_mut().zip(y.iter()).zip(k2.iter()).for_each(|((s, y), k)| *s = y + 0.5 * h * k);
    rate(tmp, k3);
    tmp.iter_mut().zip(y.iter()).zip(k3.iter()).for_each(|((s, y), k)| *s = y + h * k);
    rate(tmp, k4);
    for j in 0..y.len() {
        y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
}

/// Integrates all columns from `eta(0) = 0` on the uniform grid `i dt`,
/// checking that every column increases at every recorded time.
fn integrate_columns(
    cfg: &PhysicalConfig,
    beta: &[f64],
    steps: usize,
    dt: f64,
    mut rate: impl FnMut(&[f64], &mut [f64]),
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let nb = beta.len();
    let mut k: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; nb]);
    let mut times = Vec::with_capacity(steps + 1);
    let mut rows = Vec::with_capacity(steps + 1);
    times.push(0.0);
    rows.push(vec![0.0; nb]);

    let mut t = seed_time(beta[0], cfg, dt);
    let mut y: Vec<f64> = beta.iter().map(|b| small_time(t, *b, cfg)).collect();
    while t < dt {
        let h = ((STARTUP_GROWTH - 1.0) * t).min(dt - t);
        rk4_step(&mut rate, &mut y, h, &mut k);
        t = if dt - t <= h { dt } else { t + h };
    }
    let check = |prev: &[f64], next: &[f64], t: f64| -> Result<()> {
        for j in 0..nb {
            check_monotone(prev[j], next[j], t, beta[j])?;
        }
        Ok(())
    };
    check(&rows[0], &y, dt)?;
    times.push(dt);
    rows.push(y.clone());
    for i in 2..=steps {
        // Early intervals are subdivided so that no substep exceeds a tenth of
        // the elapsed time.
        let t_prev = (i - 1) as f64 * dt;
        let sub = (dt / ((STARTUP_GROWTH - 1.0) * t_prev)).ceil().max(1.0) as usize;
        for _ in 0..sub {
            rk4_step(&mut rate, &mut y, dt / sub as f64, &mut k);
        }
        let t = i as f64 * dt;
        check(&rows[i - 1], &y, t)?;
        times.push(t);
        rows.push(y.clone());
    }
    Ok((times, rows))
}

fn check_monotone(prev: f64, next: f64, t: f64, beta: f64) -> Result<()> {
    if next.is_finite() && next > prev {
        Ok(())
    } else {
        Err(Error::NonMonotone { t, beta })
    }
}

/// `eta(t)` on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaCurve {
    pub beta: f64,
    pub times: Vec<f64>,
    pub eta: Vec<f64>,
}

impl EtaCurve {
    /// Linear interpolation at `t`, clamped to the covered range.
    pub fn at(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.eta, t)
    }
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    let last = times.len() - 1;
    if t <= times[0] {
        return values[0];
    }
    if t >= times[last] {
        return values[last];
    }
    let dt = times[1] - times[0];
    let i = ((t - times[0]) / dt).floor() as usize;
    let i = i.min(last - 1);
    let frac = (t - times[i]) / (times[i + 1] - times[i]);
    values[i] * (1.0 - frac) + values[i + 1] * frac
}

/// RK4 on `2 gamma d_t eta = 4 / beta + hbar^2 / eta` from `eta(0) = 0`.
///
/// `beta = inf` drops the thermal term.
pub fn solve_eta_approx(cfg: &PhysicalConfig, beta: f64, t_max: f64, dt: f64) -> Result<EtaCurve> {
    check_dispersion_cfg(cfg)?;
    if !(beta > 0.0) {
        return Err(invalid("beta", "must be > 0"));
    }
    let steps = check_dt(t_max, dt)?;
    let thermal = 4.0 / beta;
    let hh = cfg.hbar * cfg.hbar;
    let two_gamma = 2.0 * cfg.gamma;
    let (times, rows) = integrate_columns(cfg, &[beta], steps, dt, |y, out| {
        out[0] = (thermal + hh / y[0]) / two_gamma;
    })?;
    let eta = rows.into_iter().map(|r| r[0]).collect();
    Ok(EtaCurve { beta, times, eta })
}

/// `x - ln(1 + x)` without cancellation for small `x`.
fn x_minus_log1p(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        // Alternating series x^2/2 - x^3/3 + ...
        let mut term = x * x;
        let mut sum = 0.0;
        for k in 2..16 {
            sum += term / k as f64;
            term *= -x;
        }
        sum
    } else {
        x - x.ln_1p()
    }
}

/// Root of `eta - (hbar^2 beta / 4) ln(1 + 4 eta / (hbar^2 beta)) = 2 t / (gamma beta)`.
///
/// The left side is strictly increasing in `eta`, so the nonnegative root is
/// unique; it is found by Newton steps safeguarded with bisection. `beta = inf`
/// yields `hbar sqrt(t / gamma)`.
pub fn eta_implicit(t: f64, beta: f64, cfg: &PhysicalConfig) -> Result<f64> {
    check_dispersion_cfg(cfg)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid("t", "must be finite and >= 0"));
    }
    if !(beta > 0.0) {
        return Err(invalid("beta", "must be > 0"));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    if beta.is_infinite() {
        return Ok(cfg.hbar * (t / cfg.gamma).sqrt());
    }
    let c = 2.0 * t / (cfg.gamma * beta);
    // Scaled form: x - ln(1 + x) = y with eta = a x.
    let a = cfg.hbar * cfg.hbar * beta / 4.0;
    let y = c / a;
    let h = |x: f64| x_minus_log1p(x) - y;
    let eta_hi = c + cfg.hbar * (t / cfg.gamma).sqrt() + 1.0;
    let (mut lo, mut hi) = (0.0, eta_hi / a);
    // Both asymptotes of the left side give a starting point inside the bracket.
    let mut x = ((2.0 * y).sqrt()).max(y).min(hi);
    for _ in 0..200 {
        let hx = h(x);
        if hx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = x / (1.0 + x);
        let mut next = if slope > 0.0 { x - hx / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * next.abs() || hi - lo <= 1e-16 * hi {
            return Ok(a * next);
        }
        x = next;
    }
    Err(Error::NoConvergence { iterations: 200 })
}

/// Position variance `Sigma = eta / m`.
pub fn covariance_from_eta(eta: f64, cfg: &PhysicalConfig) -> Result<f64> {
    if !(eta >= 0.0) {
        return Err(invalid("eta", "must be >= 0"));
    }
    Ok(eta / cfg.mass)
}

/// Geometric grid of `n` reciprocal temperatures from `BETA_MIN_RATIO * beta_max`
/// to `beta_max`.
pub fn log_beta_grid(beta_max: f64, n: usize) -> Result<Vec<f64>> {
    if !(beta_max > 0.0 && beta_max.is_finite()) {
        return Err(invalid("beta", "must be finite and > 0"));
    }
    if n < 2 {
        return Err(invalid("beta_grid", "need at least two points"));
    }
    let lo = (BETA_MIN_RATIO * beta_max).ln();
    let hi = beta_max.ln();
    Ok((0..n)
        .map(|j| (lo + (hi - lo) * j as f64 / (n - 1) as f64).exp())
        .collect())
}

/// Dispersion surface `eta[i][j] = eta(t_i, beta_j)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaFamily {
    pub beta_grid: Vec<f64>,
    pub times: Vec<f64>,
    pub eta: Vec<Vec<f64>>,
    /// Largest bound on the `[0, beta_0]` piece of the inner integral, relative
    /// to the whole integral, over all steps.
    pub endpoint_bound: f64,
    /// Relative change of the inner integral at the largest `beta` when every
    /// second grid point is dropped, at the final time.
    pub quadrature_error: f64,
}

impl EtaFamily {
    pub fn column(&self, j: usize) -> EtaCurve {
        EtaCurve {
            beta: self.beta_grid[j],
            times: self.times.clone(),
            eta: self.eta.iter().map(|row| row[j]).collect(),
        }
    }

    pub fn sigma(&self, i: usize, j: usize, cfg: &PhysicalConfig) -> f64 {
        self.eta[i][j] / cfg.mass
    }
}

/// Inner integrals `I_j = ∫_0^{beta_j} (hbar / eta)^2 db` by the trapezoid rule
/// on the grid, plus `beta_0 f_0 / 2` for `[0, beta_0]`. The integrand grows
/// with `beta`, so that piece lies in `[0, beta_0 f_0]`; the relative size of
/// the uncertainty `beta_0 f_0 / 2` is returned alongside.
fn inner_integrals(beta: &[f64], eta: &[f64], hh: f64, out: &mut [f64]) -> f64 {
    let f = |j: usize| hh / (eta[j] * eta[j]);
    let head = 0.5 * beta[0] * f(0);
    let mut acc = head;
    out[0] = acc;
    for j in 1..beta.len() {
        acc += 0.5 * (beta[j] - beta[j - 1]) * (f(j) + f(j - 1));
        out[j] = acc;
    }
    if acc > 0.0 {
        head / acc
    } else {
        0.0
    }
}

fn trapezoid_every_second(beta: &[f64], f: &[f64]) -> f64 {
    let idx: Vec<usize> = (0..beta.len())
        .step_by(2)
        .chain(std::iter::once(beta.len() - 1))
        .collect();
    let mut acc = 0.5 * beta[0] * f[0];
    for w in idx.windows(2) {
        if w[0] != w[1] {
            acc += 0.5 * (beta[w[1]] - beta[w[0]]) * (f[w[1]] + f[w[0]]);
        }
    }
    acc
}

/// Joint RK4 integration of all columns of the coupled family.
pub fn solve_eta_family(cfg: &PhysicalConfig, beta_grid: &[f64], t_max: f64, dt: f64) -> Result<EtaFamily> {
    check_dispersion_cfg(cfg)?;
    if beta_grid.len() < 2 {
        return Err(invalid("beta_grid", "need at least two points"));
    }
    if beta_grid.iter().any(|b| !(*b > 0.0 && b.is_finite()))
        || beta_grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(invalid("beta_grid", "must be finite, positive and strictly ascending"));
    }
    let steps = check_dt(t_max, dt)?;
    let nb = beta_grid.len();
    let hh = cfg.hbar * cfg.hbar;
    let mut integral = vec![0.0; nb];
    let mut endpoint_bound: f64 = 0.0;
    let (times, rows) = integrate_columns(cfg, beta_grid, steps, dt, |eta, out| {
        let head = inner_integrals(beta_grid, eta, hh, &mut integral);
        endpoint_bound = endpoint_bound.max(head);
        for j in 0..nb {
            out[j] = (4.0 + eta[j] * integral[j]) / (2.0 * beta_grid[j] * cfg.gamma);
        }
    })?;

    let y = &rows[rows.len() - 1];
    let f: Vec<f64> = y.iter().map(|e| hh / (e * e)).collect();
    let mut full = vec![0.0; nb];
    inner_integrals(beta_grid, y, hh, &mut full);
    let coarse = trapezoid_every_second(beta_grid, &f);
    let quadrature_error = (coarse - full[nb - 1]).abs() / full[nb - 1];

    Ok(EtaFamily {
        beta_grid: beta_grid.to_vec(),
        times,
        eta: rows,
        endpoint_bound,
        quadrature_error,
    })
}

/// Cumulative integrals on a non-uniform grid: Simpson on interval pairs with
/// the midpoint value taken as the node in between, trapezoid for a leftover
/// interval. `out[j]` is filled at every node; odd nodes inside a pair use the
/// quadratic through the pair.
fn cumulative_simpson(x: &[f64], f: &[f64], start: f64, out: &mut [f64]) {
    let n = x.len();
    out[0] = start;
    let mut j = 0;
    while j + 2 < n {
        let (h0, h1) = (x[j + 1] - x[j], x[j + 2] - x[j + 1]);
        let (f0, f1, f2) = (f[j], f[j + 1], f[j + 2]);
        // Quadratic through the three nodes, integrated over [x0, x1] and [x0, x2].
        let c2 = ((f2 - f1) / h1 - (f1 - f0) / h0) / (h0 + h1);
        let c1 = (f1 - f0) / h0 - c2 * h0;
        let prim = |u: f64| f0 * u + 0.5 * c1 * u * u + c2 * u * u * u / 3.0;
        out[j + 1] = out[j] + prim(h0);
        out[j + 2] = out[j] + prim(h0 + h1);
        j += 2;
    }
    if j + 1 < n {
        out[j + 1] = out[j] + 0.5 * (x[j + 1] - x[j]) * (f[j] + f[j + 1]);
    }
}

/// Largest relative residual of the matrix covariance equation
/// `2 beta B Sigma d_t(Sigma^-1) + hbar^2 ∫ Sigma^-1 M^-1 Sigma^-1 db + 4 Sigma^-1 = 0`
/// under the diagonal ansatz `Sigma = eta / m`, `B = gamma m`, evaluated on the
/// family for times `>= t_from`. Time derivatives are central differences and
/// the temperature integral is a piecewise quadratic rule, independent of the
/// trapezoid rule used by the solver. The residual is scaled by `4 / Sigma`.
pub fn diagonal_ansatz_residual(family: &EtaFamily, cfg: &PhysicalConfig, t_from: f64) -> Result<f64> {
    let nt = family.times.len();
    if nt < 3 {
        return Err(invalid("family", "need at least three time points"));
    }
    let m = cfg.mass;
    let b = cfg.gamma * m;
    let beta = &family.beta_grid;
    let nb = beta.len();
    let mut worst: f64 = 0.0;
    let mut inv_sq = vec![0.0; nb];
    let mut integral = vec![0.0; nb];
    for i in 1..nt - 1 {
        if family.times[i] < t_from {
            continue;
        }
        let sigma: Vec<f64> = family.eta[i].iter().map(|e| e / m).collect();
        for (s, sig) in inv_sq.iter_mut().zip(&sigma) {
            *s = 1.0 / (sig * sig * m);
        }
        cumulative_simpson(beta, &inv_sq, 0.5 * beta[0] * inv_sq[0], &mut integral);
        let dt = family.times[i + 1] - family.times[i - 1];
        for j in 0..nb {
            let d_inv = (m / family.eta[i + 1][j] - m / family.eta[i - 1][j]) / dt;
            let r = 2.0 * beta[j] * b * sigma[j] * d_inv
                + cfg.hbar * cfg.hbar * integral[j]
                + 4.0 / sigma[j];
            worst = worst.max((r / (4.0 / sigma[j])).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_branch_agrees_with_direct_formula() {
        for x in [9.9e-3, -9.9e-3, 5e-3] {
            let direct = x - f64::ln_1p(x);
            assert!((x_minus_log1p(x) - direct).abs() < 1e-12 * direct);
        }
        assert!((x_minus_log1p(1e-9) - 5e-19).abs() < 1e-27);
    }

    #[test]
    fn quadratic_rule_is_exact_for_parabolas() {
        let x = [0.0, 0.3, 1.0, 1.1, 2.0, 2.5];
        let f: Vec<f64> = x.iter().map(|x| 1.0 + x - 3.0 * x * x).collect();
        let mut out = [0.0; 6];
        cumulative_simpson(&x, &f, 0.0, &mut out);
        for k in 0..5 {
            let exact = x[k] + x[k] * x[k] / 2.0 - x[k].powi(3);
            assert!((out[k] - exact).abs() < 1e-12, "{k}");
        }
    }

    #[test]
    fn zero_time_gives_zero() {
        assert_eq!(eta_implicit(0.0, 1.0, &PhysicalConfig::default()), Ok(0.0));
    }

    #[test]
    fn negative_eta_has_no_covariance() {
        assert!(covariance_from_eta(-1.0, &PhysicalConfig::default()).is_err());
        assert_eq!(covariance_from_eta(0.0, &PhysicalConfig::default()), Ok(0.0));
    }

    #[test]
    fn beta_grid_spans_three_decades() {
        let g = log_beta_grid(2.0, 31).unwrap();
        assert!((g[0] - 2e-3).abs() < 1e-15);
        assert!((g[30] - 2.0).abs() < 1e-12);
    }
}
