//! Trajectory ensembles and their estimators.
//!
//! Three Euler–Maruyama samplers share one option set:
//!
//! * force noise: `P` feels friction `-gamma P` and a white force with the
//!   fluctuation–dissipation amplitude `sqrt(2 gamma m kT)`;
//! * velocity noise: `X` diffuses with `D = hbar / 2m` under the drift
//!   `V + D d/dx ln rho`, so a target density is stationary;
//! * joint: both noises in one step, force noise on `P` and velocity noise on `X`.
//!
//! Path `i` draws its initial state from ChaCha8 stream `3i`, its force noise
//! from `3i + 1` and its velocity noise from `3i + 2`, so a path is
//! reproducible regardless of how many paths run or how they are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::calculus::d1;
use crate::model::{floored, DensityField, Grid, PhysicalConfig, Potential};

/// Minimum samples for a Favre bin to be reported.
pub const MIN_BIN_SAMPLES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    ForceDriven,
    VelocityDriven,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeOptions {
    pub dt: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub noise_mode: NoiseMode,
    /// Store every `record_every`-th step (the last step is always stored).
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

impl SdeOptions {
    pub fn new(dt: f64, n_steps: usize, n_paths: usize, seed: u64, noise_mode: NoiseMode) -> Self {
        Self {
            dt,
            n_steps,
            n_paths,
            seed,
            noise_mode,
            record_every: 1,
        }
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("dt", "must be finite and > 0"));
        }
        if self.n_paths == 0 {
            return Err(invalid("n_paths", "must be >= 1"));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every", "must be >= 1"));
        }
        Ok(())
    }

    /// Steps at which the state is stored.
    pub fn recorded_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = (0..=self.n_steps).step_by(self.record_every).collect();
        if *steps.last().unwrap() != self.n_steps {
            steps.push(self.n_steps);
        }
        steps
    }

    fn expect_mode(&self, mode: NoiseMode) -> Result<()> {
        if self.noise_mode != mode {
            return Err(invalid(
                "noise_mode",
                format!("{:?} requested from the {:?} sampler", self.noise_mode, mode),
            ));
        }
        Ok(())
    }
}

/// Inverse-CDF sampler for the piecewise-linear interpolant of a density.
#[derive(Debug, Clone)]
pub struct DensitySampler {
    grid: Grid,
    left: Vec<f64>,
    right: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DensitySampler {
    pub fn new(rho: &DensityField) -> Self {
        let grid = *rho.grid();
        let v = rho.values();
        let cells = grid.n;
        let right_of = |i: usize| if grid.is_periodic() { v[(i + 1) % v.len()] } else { v[i + 1] };
        let left: Vec<f64> = (0..cells).map(|i| v[i]).collect();
        let right: Vec<f64> = (0..cells).map(right_of).collect();
        let mut acc = 0.0;
        let cumulative = left
            .iter()
            .zip(&right)
            .map(|(a, b)| {
                acc += 0.5 * (a + b);
                acc
            })
            .collect();
        Self {
            grid,
            left,
            right,
            cumulative,
        }
    }

    /// Position for two independent uniforms on `[0, 1)`.
    pub fn position(&self, u_cell: f64, u_within: f64) -> f64 {
        let total = *self.cumulative.last().unwrap();
        let target = u_cell * total;
        let i = self.cumulative.partition_point(|c| *c <= target).min(self.left.len() - 1);
        let (a, b) = (self.left[i], self.right[i]);
        // Solve a s + (b - a) s^2 / 2 = u (a + b) / 2 on [0, 1].
        let s = if (b - a).abs() <= 1e-12 * (a + b) {
            u_within
        } else {
            let disc = a * a + (b - a) * u_within * (a + b);
            (disc.max(0.0).sqrt() - a) / (b - a)
        };
        self.grid.x_min + (i as f64 + s.clamp(0.0, 1.0)) * self.grid.dx()
    }

    /// CDF of the same piecewise-linear density at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        let g = &self.grid;
        let s = (x - g.x_min) / g.dx();
        if s <= 0.0 {
            return 0.0;
        }
        let total = *self.cumulative.last().unwrap();
        if s >= g.n as f64 {
            return 1.0;
        }
        let i = s.floor() as usize;
        let f = s - i as f64;
        let before = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
        let (a, b) = (self.left[i], self.right[i]);
        (before + a * f + 0.5 * (b - a) * f * f) / total
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        self.position(u1, u2)
    }
}

/// Distribution of the initial `(X, P)`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Point { x: f64, p: f64 },
    Gaussian { x_mean: f64, x_sigma: f64, p_mean: f64, p_sigma: f64 },
    /// Position from a grid density, momentum Gaussian.
    Density { rho: DensityField, p_mean: f64, p_sigma: f64 },
}

impl InitialState {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite();
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        match self {
            InitialState::Point { x, p } if ok(*x) && ok(*p) => Ok(()),
            InitialState::Gaussian {
                x_mean,
                x_sigma,
                p_mean,
                p_sigma,
            } if ok(*x_mean) && nonneg(*x_sigma) && ok(*p_mean) && nonneg(*p_sigma) => Ok(()),
            InitialState::Density { p_mean, p_sigma, .. } if ok(*p_mean) && nonneg(*p_sigma) => Ok(()),
            _ => Err(invalid("init", "non-finite or negative parameters")),
        }
    }

    fn sampler(&self) -> Option<DensitySampler> {
        match self {
            InitialState::Density { rho, .. } => Some(DensitySampler::new(rho)),
            _ => None,
        }
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn draw_initial(init: &InitialState, sampler: Option<&DensitySampler>, rng: &mut impl Rng) -> (f64, f64) {
    match init {
        InitialState::Point { x, p } => (*x, *p),
        InitialState::Gaussian {
            x_mean,
            x_sigma,
            p_mean,
            p_sigma,
        } => (x_mean + x_sigma * normal(rng), p_mean + p_sigma * normal(rng)),
        InitialState::Density { p_mean, p_sigma, .. } => {
            let x = sampler.expect("density sampler").sample(rng);
            (x, p_mean + p_sigma * normal(rng))
        }
    }
}

fn path_rng(seed: u64, path: usize, role: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3 * path as u64 + role);
    rng
}

/// Sampled paths. `positions[path][record]`; `momenta` is absent for
/// velocity-noise ensembles.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub mode: NoiseMode,
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub momenta: Option<Vec<Vec<f64>>>,
    pub mass: f64,
    /// Domain length and net number of periodic wraps per record, for paths
    /// folded onto a periodic grid.
    pub windings: Option<(f64, Vec<Vec<i64>>)>,
}

impl TrajectoryEnsemble {
    pub fn n_paths(&self) -> usize {
        self.positions.len()
    }

    pub fn n_records(&self) -> usize {
        self.times.len()
    }

    /// Positions of every path at record `k`.
    pub fn positions_at(&self, k: usize) -> Vec<f64> {
        self.positions.iter().map(|p| p[k]).collect()
    }

    pub fn momenta_at(&self, k: usize) -> Option<Vec<f64>> {
        self.momenta.as_ref().map(|m| m.iter().map(|p| p[k]).collect())
    }

    /// Displacement of `path` between record 0 and record `k`, with periodic
    /// wraps undone.
    pub fn displacement(&self, path: usize, k: usize) -> f64 {
        let xs = &self.positions[path];
        let unwrap = self
            .windings
            .as_ref()
            .map_or(0.0, |(l, w)| (w[path][k] - w[path][0]) as f64 * l);
        xs[k] - xs[0] + unwrap
    }

    /// Record index closest to time `t`.
    pub fn record_near(&self, t: f64) -> usize {
        let mut best = 0;
        for (k, tk) in self.times.iter().enumerate() {
            if (tk - t).abs() < (self.times[best] - t).abs() {
                best = k;
            }
        }
        best
    }
}

struct PathOut {
    x: Vec<f64>,
    p: Option<Vec<f64>>,
    wraps: Vec<i64>,
}

fn assemble(
    opts: &SdeOptions,
    cfg: &PhysicalConfig,
    paths: Vec<PathOut>,
    with_momenta: bool,
    period: Option<f64>,
) -> TrajectoryEnsemble {
    let steps = opts.recorded_steps();
    let times = steps.iter().map(|s| *s as f64 * opts.dt).collect();
    let mut wraps = Vec::with_capacity(paths.len());
    let (positions, momenta): (Vec<_>, Vec<_>) = paths
        .into_iter()
        .map(|p| {
            wraps.push(p.wraps);
            (p.x, p.p)
        })
        .unzip();
    TrajectoryEnsemble {
        mode: opts.noise_mode,
        steps,
        times,
        positions,
        momenta: with_momenta.then(|| momenta.into_iter().map(|m| m.unwrap_or_default()).collect()),
        mass: cfg.mass,
        windings: period.map(|l| (l, wraps)),
    }
}

/// Force-noise Langevin dynamics.
pub fn simulate_classical(
    cfg: &PhysicalConfig,
    pot: &Potential,
    init: &InitialState,
    opts: &SdeOptions,
) -> Result<TrajectoryEnsemble> {
    opts.validate()?;
    opts.expect_mode(NoiseMode::ForceDriven)?;
    run_inertial(cfg, pot, init, opts, false)
}

/// Force noise on `P` and velocity noise (no osmotic drift) on `X` in one step.
pub fn simulate_joint(
    cfg: &PhysicalConfig,
    pot: &Potential,
    init: &InitialState,
    opts: &SdeOptions,
) -> Result<TrajectoryEnsemble> {
    opts.validate()?;
    opts.expect_mode(NoiseMode::Joint)?;
    run_inertial(cfg, pot, init, opts, true)
}

fn run_inertial(
    cfg: &PhysicalConfig,
    pot: &Potential,
    init: &InitialState,
    opts: &SdeOptions,
    velocity_noise: bool,
) -> Result<TrajectoryEnsemble> {
    cfg.validate()?;
    pot.validate()?;
    init.validate()?;
    if !(cfg.gamma > 0.0) {
        return Err(invalid("gamma", "must be > 0 for force-noise dynamics"));
    }
    let sampler = init.sampler();
    let forces = pot.force_table();
    let dt = opts.dt;
    let m = cfg.mass;
    let force_amp = (2.0 * cfg.gamma * m * cfg.kt * dt).sqrt();
    let vel_amp = (2.0 * cfg.diffusion() * dt).sqrt();
    let n_rec = opts.recorded_steps().len();

    let paths = (0..opts.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut init_rng = path_rng(opts.seed, i, 0);
            let mut force_rng = path_rng(opts.seed, i, 1);
            let mut vel_rng = path_rng(opts.seed, i, 2);
            let (mut x, mut p) = draw_initial(init, sampler.as_ref(), &mut init_rng);
            let mut xs = Vec::with_capacity(n_rec);
            let mut ps = Vec::with_capacity(n_rec);
            xs.push(x);
            ps.push(p);
            for step in 1..=opts.n_steps {
                let grad = forces.gradient(x, cfg);
                let mut x_new = x + p / m * dt;
                if velocity_noise {
                    x_new += vel_amp * normal(&mut vel_rng);
                }
                p += -(cfg.gamma * p + grad) * dt + force_amp * normal(&mut force_rng);
                x = x_new;
                if !(x.is_finite() && p.is_finite()) {
                    return Err(Error::NonFinitePath { path: i, step });
                }
                if step % opts.record_every == 0 || step == opts.n_steps {
                    xs.push(x);
                    ps.push(p);
                }
            }
            Ok(PathOut {
                x: xs,
                p: Some(ps),
                wraps: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(opts, cfg, paths, true, None))
}

/// Overdamped velocity-noise sampler with drift `V + D d/dx ln rho`.
///
/// Positions start from `target_rho` and are folded back into the grid
/// (wrapped or mirrored) after every step.
pub fn simulate_velocity_noise(
    cfg: &PhysicalConfig,
    target_rho: &DensityField,
    drift_v: &[f64],
    opts: &SdeOptions,
) -> Result<TrajectoryEnsemble> {
    opts.validate()?;
    opts.expect_mode(NoiseMode::VelocityDriven)?;
    cfg.validate()?;
    let grid = *target_rho.grid();
    if drift_v.len() != grid.len() {
        return Err(invalid("drift_v", "length does not match the grid"));
    }
    if let Some(node) = target_rho.values().iter().position(|r| !(*r > 0.0)) {
        return Err(Error::NodeDetected { node });
    }
    let d = cfg.diffusion();
    let log_rho: Vec<f64> = floored(target_rho.values()).iter().map(|r| r.ln()).collect();
    let drift: Vec<f64> = d1(&log_rho, &grid)
        .iter()
        .zip(drift_v)
        .map(|(g, v)| v + d * g)
        .collect();
    let sampler = DensitySampler::new(target_rho);
    let dt = opts.dt;
    let amp = (2.0 * d * dt).sqrt();
    let n_rec = opts.recorded_steps().len();
    let period = grid.is_periodic();

    let paths = (0..opts.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut init_rng = path_rng(opts.seed, i, 0);
            let mut vel_rng = path_rng(opts.seed, i, 2);
            let mut x = sampler.sample(&mut init_rng);
            let mut xs = Vec::with_capacity(n_rec);
            let mut wraps = Vec::with_capacity(n_rec);
            let mut wound = 0i64;
            xs.push(x);
            wraps.push(wound);
            for step in 1..=opts.n_steps {
                let moved = x + grid.interpolate(&drift, x) * dt + amp * normal(&mut vel_rng);
                if !moved.is_finite() {
                    return Err(Error::NonFinitePath { path: i, step });
                }
                x = grid.fold(moved);
                if period {
                    wound += ((moved - x) / grid.length()).round() as i64;
                }
                if step % opts.record_every == 0 || step == opts.n_steps {
                    xs.push(x);
                    wraps.push(wound);
                }
            }
            Ok(PathOut { x: xs, p: None, wraps })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(opts, cfg, paths, false, grid.is_periodic().then(|| grid.length())))
}

/// Histogram density, Favre-averaged velocity and Reynolds stress per node bin.
///
/// Bins with fewer than [`MIN_BIN_SAMPLES`] samples report `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct FavreFields {
    pub density: DensityField,
    pub velocity: Vec<Option<f64>>,
    pub stress: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

/// Favre estimates over the records with `t` in `window`.
///
/// With momenta and no velocity noise the sampled velocity is `P / m`. When
/// velocity noise is present the path is not differentiable; the forward and
/// backward difference quotients, with `P / m` removed, have bin means
/// `b+` and `b-`, and the stochastic velocity is taken as the two-point
/// variable `{b+, b-}`. It contributes `(b+ + b-) / 2` to `V` and
/// `((b+ - b-) / 2)^2` to `R`, on top of the mean and variance of `P / m`.
pub fn estimate_favre_fields(ens: &TrajectoryEnsemble, grid: &Grid, window: (f64, f64)) -> Result<FavreFields> {
    let (t0, t1) = window;
    if !(t0 <= t1) {
        return Err(invalid("window", "start must not exceed end"));
    }
    let quotients = ens.mode != NoiseMode::ForceDriven;
    let last = ens.n_records() - 1;
    let records: Vec<usize> = (0..=last)
        .filter(|k| (t0..=t1).contains(&ens.times[*k]))
        .filter(|k| !quotients || (*k > 0 && *k < last))
        .collect();
    if records.is_empty() {
        return Err(invalid("window", "contains no usable records"));
    }

    let nb = grid.len();
    let mut count = vec![0usize; nb];
    let mut sum_u = vec![0.0; nb];
    let mut sum_uu = vec![0.0; nb];
    let mut sum_fwd = vec![0.0; nb];
    let mut sum_bwd = vec![0.0; nb];
    let mut total = 0usize;
    let m = ens.mass;
    for (path, xs) in ens.positions.iter().enumerate() {
        let ps = ens.momenta.as_ref().map(|all| &all[path]);
        for &k in &records {
            let Some(b) = grid.bin_of(xs[k]) else { continue };
            total += 1;
            let u = ps.map_or(0.0, |p| p[k] / m);
            count[b] += 1;
            sum_u[b] += u;
            sum_uu[b] += u * u;
            if quotients {
                let dtf = ens.times[k + 1] - ens.times[k];
                let dtb = ens.times[k] - ens.times[k - 1];
                // A wrap across a periodic boundary is not a displacement.
                sum_fwd[b] += displacement(grid, xs[k], xs[k + 1]) / dtf - u;
                sum_bwd[b] += displacement(grid, xs[k - 1], xs[k]) / dtb - u;
            }
        }
    }
    if total == 0 {
        return Err(invalid("window", "no samples fall inside the grid"));
    }
    let hist: Vec<f64> = (0..nb).map(|b| count[b] as f64 / (total as f64 * grid.weight(b))).collect();
    let density = DensityField::new(*grid, hist)?;
    let mut velocity = vec![None; nb];
    let mut stress = vec![None; nb];
    for b in 0..nb {
        if count[b] < MIN_BIN_SAMPLES {
            continue;
        }
        let c = count[b] as f64;
        let mean_u = sum_u[b] / c;
        let var_u = (sum_uu[b] / c - mean_u * mean_u).max(0.0) * c / (c - 1.0);
        let (mut v, mut r) = (mean_u, var_u);
        if quotients {
            let (bf, bb) = (sum_fwd[b] / c, sum_bwd[b] / c);
            v += 0.5 * (bf + bb);
            r += 0.25 * (bf - bb) * (bf - bb);
        }
        velocity[b] = Some(v);
        stress[b] = Some(r);
    }
    Ok(FavreFields {
        density,
        velocity,
        stress,
        counts: count,
    })
}

fn displacement(grid: &Grid, from: f64, to: f64) -> f64 {
    let d = to - from;
    if grid.is_periodic() {
        let l = grid.length();
        d - l * (d / l).round()
    } else {
        d
    }
}

/// Mean squared displacement and ensemble variance per record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MsdCurve {
    pub times: Vec<f64>,
    pub msd: Vec<f64>,
    pub variance: Vec<f64>,
}

pub fn estimate_msd(ens: &TrajectoryEnsemble) -> Result<MsdCurve> {
    let n = ens.n_paths();
    if n < 2 {
        return Err(invalid("ensemble", "at least two paths are required"));
    }
    let nf = n as f64;
    let mut msd = Vec::with_capacity(ens.n_records());
    let mut variance = Vec::with_capacity(ens.n_records());
    for k in 0..ens.n_records() {
        let (mut s, mut sx, mut sxx) = (0.0, 0.0, 0.0);
        for (i, xs) in ens.positions.iter().enumerate() {
            let d = ens.displacement(i, k);
            let x = xs[0] + d;
            s += d * d;
            sx += x;
            sxx += x * x;
        }
        msd.push(s / nf);
        let mean = sx / nf;
        variance.push((sxx / nf - mean * mean).max(0.0) * nf / (nf - 1.0));
    }
    Ok(MsdCurve {
        times: ens.times.clone(),
        msd,
        variance,
    })
}

/// Least-squares slope of `values` against `times` over `t_from <= t <= t_to`.
pub fn fit_slope(times: &[f64], values: &[f64], t_from: f64, t_to: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| (t_from..=t_to).contains(*t))
        .map(|(t, v)| (*t, *v))
        .collect();
    if pts.len() < 2 {
        return Err(invalid("fit window", "fewer than two points"));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(t, v)| (t - mt) * (v - mv)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - mt) * (t - mt)).sum();
    if !(sxx > 0.0) {
        return Err(invalid("fit window", "all points at one time"));
    }
    Ok(sxy / sxx)
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0f64, |d, (i, x)| {
        let f = cdf(*x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// Asymptotic one-sample KS critical value at significance `alpha`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}
