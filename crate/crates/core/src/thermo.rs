//! Canonical equilibrium of a grid Hamiltonian.
//!
//! The Hamiltonian `-hbar^2/(2m) d^2/dx^2 + U` is discretized on the interior
//! nodes of a reflecting grid with Dirichlet walls, giving a real symmetric
//! tridiagonal matrix. Eigenvalues come from implicit QL; the eigenvectors of
//! the lowest modes come from inverse iteration.

use crate::error::{Error, Result};
use crate::model::{Boundary, DensityField, Grid, PhysicalConfig, Potential};

/// Relative tail mass tolerated when a spectrum is truncated.
pub const TAIL_TOLERANCE: f64 = 1e-10;

const QL_MAX_SWEEPS: usize = 60;

/// Real symmetric tridiagonal matrix; `off[i]` couples rows `i` and `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(crate::error::invalid(
                "matrix",
                "off-diagonal must be one shorter than the diagonal",
            ));
        }
        Ok(Self { diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * v[i];
                if i > 0 {
                    acc += self.off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    acc += self.off[i] * v[i + 1];
                }
                acc
            })
            .collect()
    }

    /// Infinity norm.
    pub fn norm(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.off[i - 1].abs();
                }
                if i + 1 < n {
                    s += self.off[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    /// All eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mut d = self.diag.clone();
        let mut e = self.off.clone();
        e.push(0.0);
        ql_implicit(&mut d, &mut e)?;
        d.sort_by(f64::total_cmp);
        Ok(d)
    }
}

/// Implicit QL with Wilkinson shifts on `(d, e)`, eigenvalues only.
/// On return `d` holds the (unsorted) eigenvalues.
fn ql_implicit(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let scale = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * scale {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > QL_MAX_SWEEPS {
                return Err(Error::NoConvergence { iterations: sweeps });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// LU factors of `T - sigma I` with partial pivoting (row swaps between
/// neighbours only), stored as three upper bands.
struct ShiftedLu {
    upper: Vec<[f64; 3]>,
    mult: Vec<f64>,
    swapped: Vec<bool>,
}

impl ShiftedLu {
    fn new(t: &SymTridiagonal, sigma: f64, tiny: f64) -> Self {
        let n = t.len();
        let mut upper = vec![[0.0; 3]; n];
        let mut mult = vec![0.0; n];
        let mut swapped = vec![false; n];
        let off = |i: usize| if i + 1 < n { t.off[i] } else { 0.0 };
        let mut cur = [t.diag[0] - sigma, off(0), 0.0];
        for k in 0..n {
            if k + 1 == n {
                if cur[0].abs() < tiny {
                    cur[0] = tiny;
                }
                upper[k] = cur;
                break;
            }
            let mut next = [t.off[k], t.diag[k + 1] - sigma, off(k + 1)];
            if next[0].abs() > cur[0].abs() {
                std::mem::swap(&mut cur, &mut next);
                swapped[k] = true;
            }
            if cur[0].abs() < tiny {
                cur[0] = tiny;
            }
            let l = next[0] / cur[0];
            mult[k] = l;
            upper[k] = cur;
            cur = [next[1] - l * cur[1], next[2] - l * cur[2], 0.0];
        }
        Self {
            upper,
            mult,
            swapped,
        }
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        for k in 0..n.saturating_sub(1) {
            if self.swapped[k] {
                rhs.swap(k, k + 1);
            }
            rhs[k + 1] -= self.mult[k] * rhs[k];
        }
        for k in (0..n).rev() {
            let u = &self.upper[k];
            let mut acc = rhs[k];
            if k + 1 < n {
                acc -= u[1] * rhs[k + 1];
            }
            if k + 2 < n {
                acc -= u[2] * rhs[k + 2];
            }
            rhs[k] = acc / u[0];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

/// Unit-norm (Euclidean) eigenvectors for the given eigenvalues by inverse
/// iteration. Vectors of close eigenvalues are orthogonalized against each other.
fn inverse_iteration(t: &SymTridiagonal, values: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = t.len();
    let norm = t.norm().max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * norm;
    let cluster_gap = 1e-3 * norm;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(values.len());
    let mut cluster_start = 0;
    for (j, &lambda) in values.iter().enumerate() {
        if j > 0 && (lambda - values[j - 1]).abs() > cluster_gap {
            cluster_start = j;
        }
        // Perturb repeated shifts slightly so the factorizations differ.
        let sigma = lambda + (j - cluster_start) as f64 * 10.0 * tiny;
        let lu = ShiftedLu::new(t, sigma, tiny);
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_75 * (j as f64 + 1.0)).sin())
            .collect();
        normalize(&mut v);
        let mut converged = false;
        for _ in 0..8 {
            lu.solve(&mut v);
            for prev in &out[cluster_start..j] {
                let c = dot(&v, prev);
                v.iter_mut().zip(prev).for_each(|(x, p)| *x -= c * p);
            }
            normalize(&mut v);
            let hv = t.apply(&v);
            let rayleigh = dot(&v, &hv);
            let resid = hv
                .iter()
                .zip(&v)
                .map(|(h, x)| (h - rayleigh * x).powi(2))
                .sum::<f64>()
                .sqrt();
            if resid <= 1e3 * tiny {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence { iterations: 8 });
        }
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-3 * vmax) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        out.push(v);
    }
    Ok(out)
}

/// Discrete Hamiltonian on the interior nodes of a reflecting grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    grid: Grid,
    matrix: SymTridiagonal,
}

impl Hamiltonian {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn matrix(&self) -> &SymTridiagonal {
        &self.matrix
    }

    /// Number of interior nodes, `n - 1`.
    pub fn size(&self) -> usize {
        self.matrix.len()
    }

    /// `H + c` for a constant energy shift `c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.matrix.diag.iter_mut().for_each(|d| *d += c);
        out
    }

    /// Applies the operator to a nodal field with zero wall values.
    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        let inner = self.matrix.apply(&phi[1..phi.len() - 1]);
        embed(&inner)
    }
}

fn embed(inner: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(inner.len() + 2);
    out.push(0.0);
    out.extend_from_slice(inner);
    out.push(0.0);
    out
}

pub fn build_hamiltonian(grid: &Grid, pot: &Potential, cfg: &PhysicalConfig) -> Result<Hamiltonian> {
    grid.validate()?;
    cfg.validate()?;
    if grid.boundary != Boundary::Reflecting {
        return Err(Error::NonReflectingGrid);
    }
    let u = pot.on_grid(grid, cfg)?;
    let dx = grid.dx();
    let kinetic = cfg.hbar * cfg.hbar / (2.0 * cfg.mass * dx * dx);
    let diag = u[1..grid.n].iter().map(|u| 2.0 * kinetic + u).collect();
    let off = vec![-kinetic; grid.n - 2];
    Ok(Hamiltonian {
        grid: *grid,
        matrix: SymTridiagonal::new(diag, off)?,
    })
}

/// Lowest eigenpairs of a grid Hamiltonian.
///
/// Modes are nodal fields on the full grid (zero at both walls) normalized by
/// the grid quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    grid: Grid,
    energies: Vec<f64>,
    modes: Vec<Vec<f64>>,
    /// Lowest excluded eigenvalue, `None` when every mode is present.
    next_energy: Option<f64>,
}

impl SpectralDecomposition {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn modes(&self) -> &[Vec<f64>] {
        &self.modes
    }

    pub fn next_energy(&self) -> Option<f64> {
        self.next_energy
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Lowest eigenpairs with enough modes that the Boltzmann tail at `beta`
    /// stays below [`TAIL_TOLERANCE`] of the partition function.
    pub fn for_beta(h: &Hamiltonian, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let all = h.matrix.eigenvalues()?;
        let mut k = 1;
        while k < all.len() && tail_ratio(&all[..k], Some(all[k]), beta) > TAIL_TOLERANCE {
            k += 1;
        }
        from_values(h, &all, k)
    }

    /// Grid inner product of each mode with `phi`.
    pub fn coefficients(&self, phi: &[f64]) -> Vec<f64> {
        self.modes.iter().map(|m| grid_dot(&self.grid, m, phi)).collect()
    }

    pub fn partition_function(&self, beta: f64) -> Result<f64> {
        partition_function(&self.energies, self.next_energy, beta)
    }

    pub fn mean_energy(&self, beta: f64) -> Result<f64> {
        mean_energy(&self.energies, self.next_energy, beta)
    }
}

fn grid_dot(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| x * y * grid.weight(i))
        .sum()
}

fn from_values(h: &Hamiltonian, all: &[f64], k: usize) -> Result<SpectralDecomposition> {
    let vectors = inverse_iteration(&h.matrix, &all[..k])?;
    let scale = 1.0 / h.grid.dx().sqrt();
    let modes = vectors
        .into_iter()
        .map(|v| embed(&v.iter().map(|x| x * scale).collect::<Vec<_>>()))
        .collect();
    Ok(SpectralDecomposition {
        grid: h.grid,
        energies: all[..k].to_vec(),
        modes,
        next_energy: all.get(k).copied(),
    })
}

/// The `k` lowest eigenpairs.
pub fn eigensolve(h: &Hamiltonian, k: usize) -> Result<SpectralDecomposition> {
    if k == 0 || k > h.size() {
        return Err(crate::error::invalid(
            "k",
            format!("need 1 <= k <= {}, got {k}", h.size()),
        ));
    }
    let all = h.matrix.eigenvalues()?;
    from_values(h, &all, k)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && !beta.is_nan() {
        Ok(())
    } else {
        Err(crate::error::invalid("beta", "must be > 0"))
    }
}

/// Tail bound relative to the partial sum, with energies measured from the
/// lowest level. The geometric bound assumes level spacings above the cut are
/// at least the last retained gap.
fn tail_ratio(energies: &[f64], next: Option<f64>, beta: f64) -> f64 {
    let Some(next) = next else { return 0.0 };
    let e0 = energies[0];
    let partial: f64 = energies.iter().map(|e| (-beta * (e - e0)).exp()).sum();
    let gap = match energies.len() {
        1 => next - e0,
        k => next - energies[k - 1],
    };
    let denom = -(-beta * gap).exp_m1();
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    (-beta * (next - e0)).exp() / denom / partial
}

fn check_tail(energies: &[f64], next: Option<f64>, beta: f64) -> Result<()> {
    check_beta(beta)?;
    if energies.is_empty() {
        return Err(crate::error::invalid("energies", "empty spectrum"));
    }
    let tail = tail_ratio(energies, next, beta);
    if tail > TAIL_TOLERANCE {
        return Err(Error::Truncation {
            available: energies.len(),
            tail,
        });
    }
    Ok(())
}

/// `Z = sum_n exp(-beta E_n)`. `next` is the lowest omitted level, `None` for a
/// complete spectrum.
pub fn partition_function(energies: &[f64], next: Option<f64>, beta: f64) -> Result<f64> {
    check_tail(energies, next, beta)?;
    Ok(energies.iter().map(|e| (-beta * e).exp()).sum())
}

/// `sum_n E_n exp(-beta E_n) / Z`, evaluated with shifted exponents.
pub fn mean_energy(energies: &[f64], next: Option<f64>, beta: f64) -> Result<f64> {
    check_tail(energies, next, beta)?;
    let e0 = energies[0];
    let (num, den) = energies.iter().fold((0.0, 0.0), |(num, den), e| {
        let w = (-beta * (e - e0)).exp();
        (num + e * w, den + w)
    });
    Ok(num / den)
}

fn boltzmann_weights(spec: &SpectralDecomposition, beta: f64) -> Vec<f64> {
    let e0 = spec.energies[0];
    spec.energies.iter().map(|e| (-beta * (e - e0)).exp()).collect()
}

/// Canonical density `sum_n exp(-beta E_n) psi_n^2 / Z`.
pub fn gibbs_density(spec: &SpectralDecomposition, beta: f64) -> Result<DensityField> {
    check_tail(&spec.energies, spec.next_energy, beta)?;
    let weights = boltzmann_weights(spec, beta);
    let mut rho = vec![0.0; spec.grid.len()];
    for (w, mode) in weights.iter().zip(&spec.modes) {
        rho.iter_mut().zip(mode).for_each(|(r, p)| *r += w * p * p);
    }
    DensityField::new(spec.grid, rho)
}

/// `exp(-beta H / 2) phi0` by Crank-Nicolson in `beta / 2` with `n_steps` steps.
///
/// `phi0` is a nodal field; its wall values are ignored. A nonnegative `phi0`
/// must stay nonnegative, otherwise the step is rejected together with the
/// sufficient bound `h (hbar^2/(m dx^2) + max U) <= 2` on the step `h`.
pub fn beta_propagate(h: &Hamiltonian, phi0: &[f64], beta: f64, n_steps: usize) -> Result<Vec<f64>> {
    if phi0.len() != h.grid.len() {
        return Err(Error::GridMismatch);
    }
    if !(beta >= 0.0) || n_steps == 0 {
        return Err(crate::error::invalid("beta", "need beta >= 0 and at least one step"));
    }
    let t = &h.matrix;
    let n = t.len();
    let step = beta / (2.0 * n_steps as f64);
    let half = 0.5 * step;
    let positive = phi0.iter().all(|v| *v >= 0.0);
    let positivity_bound = 2.0 / t.diag.iter().fold(0.0f64, |m, d| m.max(*d));

    // (I + half T) is symmetric positive definite for a bounded-below T with
    // small enough steps; the Thomas sweep needs no pivoting then.
    let a: Vec<f64> = t.diag.iter().map(|d| 1.0 + half * d).collect();
    let b: Vec<f64> = t.off.iter().map(|o| half * o).collect();
    let mut c_prime = vec![0.0; n];
    let mut denom = vec![0.0; n];
    denom[0] = a[0];
    for i in 1..n {
        c_prime[i - 1] = b[i - 1] / denom[i - 1];
        denom[i] = a[i] - b[i - 1] * c_prime[i - 1];
    }
    if denom.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::PositivityLoss {
            h: step,
            bound: positivity_bound,
        });
    }

    let mut phi = phi0[1..phi0.len() - 1].to_vec();
    let mut rhs = vec![0.0; n];
    for _ in 0..n_steps {
        let tp = t.apply(&phi);
        for i in 0..n {
            rhs[i] = phi[i] - half * tp[i];
        }
        rhs[0] /= denom[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - b[i - 1] * rhs[i - 1]) / denom[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= c_prime[i] * rhs[i + 1];
        }
        std::mem::swap(&mut phi, &mut rhs);
        if positive && phi.iter().any(|v| *v < 0.0) {
            return Err(Error::PositivityLoss {
                h: step,
                bound: positivity_bound,
            });
        }
    }
    Ok(embed(&phi))
}

/// Spectral counterpart of [`beta_propagate`]: `sum_n c_n exp(-beta E_n / 2) psi_n`.
///
/// Fails if `phi0` has more than `1e-6` of its norm outside the computed modes.
pub fn beta_propagate_spectral(spec: &SpectralDecomposition, phi0: &[f64], beta: f64) -> Result<Vec<f64>> {
    if phi0.len() != spec.grid.len() {
        return Err(Error::GridMismatch);
    }
    let coeffs = spec.coefficients(phi0);
    let norm2 = grid_dot(&spec.grid, phi0, phi0);
    let captured: f64 = coeffs.iter().map(|c| c * c).sum();
    let missing = (norm2 - captured).max(0.0).sqrt();
    if missing > 1e-6 * norm2.sqrt() {
        return Err(Error::Truncation {
            available: spec.len(),
            tail: missing,
        });
    }
    let mut out = vec![0.0; spec.grid.len()];
    for ((c, e), mode) in coeffs.iter().zip(&spec.energies).zip(&spec.modes) {
        let w = c * (-0.5 * beta * e).exp();
        out.iter_mut().zip(mode).for_each(|(o, p)| *o += w * p);
    }
    Ok(out)
}

/// Relative residual of `-2 d(phi)/d(beta) = H phi` for the mixture amplitude
/// `phi = sqrt(Z rho_eq)`, i.e. `||H phi + 2 d_beta phi|| / ||H phi||` on the
/// interior nodes. Each mode alone satisfies the equation; the square root of
/// the superposition generally does not.
pub fn mixture_residual(h: &Hamiltonian, spec: &SpectralDecomposition, beta: f64) -> Result<f64> {
    check_tail(&spec.energies, spec.next_energy, beta)?;
    if h.grid != spec.grid {
        return Err(Error::GridMismatch);
    }
    let weights = boltzmann_weights(spec, beta);
    let n = spec.grid.len();
    let mut zrho = vec![0.0; n];
    let mut energy_weighted = vec![0.0; n];
    for ((w, e), mode) in weights.iter().zip(&spec.energies).zip(&spec.modes) {
        for i in 0..n {
            let p2 = mode[i] * mode[i];
            zrho[i] += w * p2;
            energy_weighted[i] += w * e * p2;
        }
    }
    let phi: Vec<f64> = zrho.iter().map(|r| r.sqrt()).collect();
    let hphi = h.apply(&phi);
    let (mut num, mut den) = (0.0, 0.0);
    for i in (1..n - 1).filter(|&i| phi[i] > 0.0) {
        // 2 d_beta phi = -sum E_n w_n psi_n^2 / phi
        let r = hphi[i] - energy_weighted[i] / phi[i];
        num += r * r;
        den += hphi[i] * hphi[i];
    }
    Ok((num / den).sqrt())
}
