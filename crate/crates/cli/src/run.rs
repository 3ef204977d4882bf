use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;

use qsmolu_core::dispersion::{eta_implicit, log_beta_grid, solve_eta_approx, solve_eta_family};
use qsmolu_core::export::{self, ExportError, ExportResult};
use qsmolu_core::langevin::{
    estimate_msd, fit_slope, ks_critical_value, ks_statistic, simulate_classical, simulate_joint,
    simulate_velocity_noise, DensitySampler, InitialState, NoiseMode, SdeOptions, TrajectoryEnsemble,
};
use qsmolu_core::model::{
    madelung_compose, madelung_decompose, DensityField, FlowState, Grid, WaveFunction,
};
use qsmolu_core::quantum::{self, MadelungSolver, SplitStep};
use qsmolu_core::smoluchowski::{self, boltzmann_density, Dynamics, Stepper};
use qsmolu_core::thermo::{self, SpectralDecomposition};
use qsmolu_core::Error as CoreError;

use crate::config::{InitialSpec, Regime, ScenarioConfig, Violation};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub module: &'static str,
    pub step: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub regime: Regime,
    pub config_hash: String,
    pub seed: u64,
    pub status: Status,
    pub wall_time_s: f64,
    /// Some artifacts were written before a failure.
    pub partial: bool,
    pub error: Option<Failure>,
    pub files: Vec<String>,
    pub scalars: BTreeMap<String, f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("cannot write output: {0}")]
    Output(#[from] ExportError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for RunError {
    fn from(e: serde_json::Error) -> Self {
        RunError::Io(e.into())
    }
}

/// Numeric outcome of a regime run, before it is turned into a report.
enum Outcome {
    Done,
    Failed(CoreError),
}

struct Artifacts<'a> {
    dir: &'a Path,
    hash: String,
    files: Vec<String>,
    scalars: BTreeMap<String, f64>,
}

impl Artifacts<'_> {
    fn write(&mut self, name: &str, f: impl FnOnce(BufWriter<File>, &str) -> ExportResult<BufWriter<File>>) -> Result<(), RunError> {
        let out = BufWriter::new(File::create(self.dir.join(name))?);
        let mut out = f(out, &self.hash)?;
        std::io::Write::flush(&mut out)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn scalar(&mut self, name: impl Into<String>, value: f64) {
        self.scalars.insert(name.into(), value);
    }
}

/// Runs a validated scenario into its output directory and writes `report.json`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Report, RunError> {
    let dir = cfg.output.directory.clone();
    fs::create_dir_all(&dir)?;
    let start = Instant::now();
    let mut art = Artifacts {
        dir: &dir,
        hash: cfg.hash(),
        files: Vec::new(),
        scalars: BTreeMap::new(),
    };
    log::info!("running {} into {}", cfg.regime, dir.display());
    let outcome = match cfg.regime {
        Regime::ClassicalLangevin | Regime::Joint => run_inertial(cfg, &mut art)?,
        Regime::VelocityNoise => run_velocity_noise(cfg, &mut art)?,
        Regime::Smoluchowski => run_overdamped(cfg, Dynamics::Classical, &mut art)?,
        Regime::QuantumT0 => run_overdamped(cfg, Dynamics::QuantumT0, &mut art)?,
        Regime::Schrodinger => run_schrodinger(cfg, &mut art)?,
        Regime::Madelung => run_madelung(cfg, &mut art)?,
        Regime::Equilibrium => run_equilibrium(cfg, &mut art)?,
        Regime::Dispersion => run_dispersion(cfg, &mut art)?,
    };
    let (status, error) = match outcome {
        Outcome::Done => (Status::Ok, None),
        Outcome::Failed(e) => {
            log::error!("{} failed: {e}", cfg.regime.module());
            (
                Status::Failed,
                Some(Failure {
                    module: cfg.regime.module(),
                    step: failing_step(&e),
                    message: e.to_string(),
                }),
            )
        }
    };
    let report = Report {
        regime: cfg.regime,
        config_hash: art.hash,
        seed: cfg.integrator.seed,
        partial: status == Status::Failed && !art.files.is_empty(),
        status,
        wall_time_s: start.elapsed().as_secs_f64(),
        error,
        files: art.files,
        scalars: art.scalars,
    };
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

fn failing_step(e: &CoreError) -> Option<usize> {
    match e {
        CoreError::StepFailed { step, .. } | CoreError::NodeFormation { step, .. } | CoreError::NonFinitePath { step, .. } => {
            Some(*step)
        }
        _ => None,
    }
}

macro_rules! numeric {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return Ok(Outcome::Failed(e)),
        }
    };
}

/// Checks that need the built initial state: node-free densities and step
/// sizes within the solvers' stability bounds.
pub fn preflight(cfg: &ScenarioConfig) -> Result<(), Violation> {
    let phys = cfg.physical.to_core();
    let pot = &cfg.potential;
    let at = |path: &str, e: CoreError| Violation {
        path: path.to_string(),
        message: e.to_string(),
    };
    let dt_issue = |e: CoreError| match e {
        CoreError::StabilityBound { .. } => at("integrator.dt", e),
        CoreError::NodeDetected { .. } | CoreError::DegenerateDensity { .. } => at("initial", e),
        other => at("initial", other),
    };
    match cfg.regime {
        Regime::ClassicalLangevin | Regime::Joint => {
            langevin_initial(cfg).map_err(|e| at("initial", e))?;
        }
        Regime::VelocityNoise => {
            let rho = density_initial(cfg).map_err(|e| at("initial", e))?;
            if let Some(node) = rho.values().iter().position(|r| !(*r > 0.0)) {
                return Err(at("initial", CoreError::NodeDetected { node }));
            }
        }
        Regime::Smoluchowski | Regime::QuantumT0 => {
            let rho = density_initial(cfg).map_err(|e| at("initial", e))?;
            let dynamics = if cfg.regime == Regime::Smoluchowski {
                Dynamics::Classical
            } else {
                Dynamics::QuantumT0
            };
            let mut stepper = Stepper::new(*rho.grid(), pot, &phys, dynamics, cfg.dt()).map_err(|e| at("integrator.dt", e))?;
            let bound = stepper.stability_bound(rho.values()).map_err(dt_issue)?;
            if cfg.dt() > bound {
                return Err(at("integrator.dt", CoreError::StabilityBound { dt: cfg.dt(), bound }));
            }
        }
        Regime::Schrodinger => {
            let psi = wave_initial(cfg).map_err(|e| at("initial", e))?;
            SplitStep::new(psi.grid(), pot, &phys, cfg.dt()).map_err(|e| at("grid", e))?;
        }
        Regime::Madelung => {
            let psi = wave_initial(cfg).map_err(|e| at("initial", e))?;
            let flow = madelung_decompose(&psi, &phys).map_err(|e| at("initial", e))?;
            MadelungSolver::new(&flow, pot, &phys, cfg.dt()).map_err(dt_issue)?;
        }
        Regime::Equilibrium | Regime::Dispersion => {}
    }
    Ok(())
}

fn grid_of(cfg: &ScenarioConfig) -> Result<Grid, CoreError> {
    let g = cfg.grid.ok_or(CoreError::InvalidParameter {
        name: "grid",
        reason: "required".into(),
    })?;
    g.validate()?;
    Ok(g)
}

/// Lowest eigenmode of the grid Hamiltonian, signed positive.
fn ground_mode(cfg: &ScenarioConfig) -> Result<(Grid, Vec<f64>), CoreError> {
    let grid = grid_of(cfg)?;
    let h = thermo::build_hamiltonian(&grid, &cfg.potential, &cfg.physical.to_core())?;
    let spec = thermo::eigensolve(&h, 1)?;
    let mode = &spec.modes()[0];
    let sign = if mode.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    Ok((grid, mode.iter().map(|v| sign * v).collect()))
}

fn density_initial(cfg: &ScenarioConfig) -> Result<DensityField, CoreError> {
    let phys = cfg.physical.to_core();
    match cfg.initial.as_ref().expect("validated") {
        InitialSpec::Gaussian { center, sigma, .. } => DensityField::gaussian(grid_of(cfg)?, *center, *sigma),
        InitialSpec::Uniform => Ok(DensityField::uniform(grid_of(cfg)?)),
        InitialSpec::Boltzmann { .. } => boltzmann_density(&grid_of(cfg)?, &cfg.potential, &phys),
        InitialSpec::GroundState => {
            let (grid, mode) = ground_mode(cfg)?;
            DensityField::new(grid, mode.iter().map(|v| v * v).collect())
        }
        InitialSpec::Point { .. } => Err(CoreError::InvalidParameter {
            name: "initial",
            reason: "a point is not a grid density".into(),
        }),
    }
}

fn langevin_initial(cfg: &ScenarioConfig) -> Result<InitialState, CoreError> {
    let phys = cfg.physical.to_core();
    let thermal = (phys.mass * phys.kt).sqrt();
    let init = match cfg.initial.clone().unwrap_or(InitialSpec::Point { x: 0.0, p: 0.0 }) {
        InitialSpec::Point { x, p } => InitialState::Point { x, p },
        InitialSpec::Gaussian {
            center,
            sigma,
            p_mean,
            p_sigma,
            ..
        } => InitialState::Gaussian {
            x_mean: center,
            x_sigma: sigma,
            p_mean,
            p_sigma,
        },
        InitialSpec::Boltzmann { p_sigma } => InitialState::Density {
            rho: density_initial(cfg)?,
            p_mean: 0.0,
            p_sigma: p_sigma.unwrap_or(thermal),
        },
        InitialSpec::Uniform | InitialSpec::GroundState => InitialState::Density {
            rho: density_initial(cfg)?,
            p_mean: 0.0,
            p_sigma: thermal,
        },
    };
    init.validate()?;
    Ok(init)
}

fn wave_initial(cfg: &ScenarioConfig) -> Result<WaveFunction, CoreError> {
    match cfg.initial.as_ref().expect("validated") {
        InitialSpec::Gaussian { center, sigma, k0, .. } => WaveFunction::gaussian(grid_of(cfg)?, *center, *sigma, *k0),
        InitialSpec::GroundState => {
            let (grid, mode) = ground_mode(cfg)?;
            WaveFunction::new(grid, mode.iter().map(|v| Complex64::new(*v, 0.0)).collect())
        }
        other => Err(CoreError::InvalidParameter {
            name: "initial",
            reason: format!("`{}` is not a wave function", other.kind()),
        }),
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

fn sde_options(cfg: &ScenarioConfig, mode: NoiseMode) -> SdeOptions {
    SdeOptions::new(cfg.dt(), cfg.steps(), cfg.paths(), cfg.integrator.seed, mode).with_record_every(cfg.output.snapshot_every)
}

/// Ensemble, MSD curve and the late-time MSD slope over the second half of the run.
fn write_ensemble_outputs(ens: &TrajectoryEnsemble, art: &mut Artifacts) -> Result<(), RunError> {
    art.write("ensemble.csv", |w, h| export::write_ensemble(w, h, ens))?;
    let last = ens.n_records() - 1;
    let t_end = ens.times[last];
    art.scalar("t_final", t_end);
    let (mx, vx) = mean_var(&ens.positions_at(last));
    art.scalar("mean_x_final", mx);
    art.scalar("var_x_final", vx);
    if let Some(p) = ens.momenta_at(last) {
        let (mp, vp) = mean_var(&p);
        art.scalar("mean_p_final", mp);
        art.scalar("var_p_final", vp);
    }
    if ens.n_paths() >= 2 {
        let msd = estimate_msd(ens).expect("at least two paths");
        art.write("msd.csv", |w, h| export::write_msd(w, h, &msd))?;
        art.scalar("msd_final", msd.msd[last]);
        if let Ok(slope) = fit_slope(&msd.times, &msd.msd, 0.5 * t_end, t_end) {
            art.scalar("msd_slope", slope);
        }
    }
    Ok(())
}

fn run_inertial(cfg: &ScenarioConfig, art: &mut Artifacts) -> Result<Outcome, RunError> {
    let phys = cfg.physical.to_core();
    let init = numeric!(langevin_initial(cfg));
    let ens = if cfg.regime == Regime::Joint {
        numeric!(simulate_joint(&phys, &cfg.potential, &init, &sde_options(cfg, NoiseMode::Joint)))
    } else {
        numeric!(simulate_classical(&phys, &cfg.potential, &init, &sde_options(cfg, NoiseMode::ForceDriven)))
    };
    write_ensemble_outputs(&ens, art)?;
    Ok(Outcome::Done)
}

fn run_velocity_noise(cfg: &ScenarioConfig, art: &mut Artifacts) -> Result<Outcome, RunError> {
    let phys = cfg.physical.to_core();
    let target = numeric!(density_initial(cfg));
    let drift = vec![cfg.integrator.drift_velocity; target.grid().len()];
    let ens = numeric!(simulate_velocity_noise(&phys, &target, &drift, &sde_options(cfg, NoiseMode::VelocityDriven)));
    write_ensemble_outputs(&ens, art)?;
    if cfg.integrator.drift_velocity == 0.0 {
        let sampler = DensitySampler::new(&target);
        let finals = ens.positions_at(ens.n_records() - 1);
        art.scalar("ks_statistic", ks_statistic(&finals, |x| sampler.cdf(x)));
        art.scalar("ks_critical_1pct", ks_critical_value(finals.len(), 0.01));
    }
    Ok(Outcome::Done)
}

fn run_overdamped(cfg: &ScenarioConfig, dynamics: Dynamics, art: &mut Artifacts) -> Result<Outcome, RunError> {
    let phys = cfg.physical.to_core();
    let rho0 = numeric!(density_initial(cfg));
    let mut stepper = numeric!(Stepper::new(*rho0.grid(), &cfg.potential, &phys, dynamics, cfg.dt()));
    art.scalar("stability_bound_initial", numeric!(stepper.stability_bound(rho0.values())));
    let (snaps, failure) = numeric!(smoluchowski::evolve_partial(
        &rho0,
        &cfg.potential,
        &phys,
        dynamics,
        cfg.dt(),
        cfg.steps(),
        cfg.output.snapshot_every
    ));
    let mass0 = rho0.mass();
    let mass_drift = snaps.iter().map(|s| (s.density.mass() - mass0).abs()).fold(0.0, f64::max);
    art.write("density.csv", |w, h| export::write_density_snapshots(w, h, &snaps))?;
    let last = snaps.last().expect("initial snapshot");
    art.scalar("t_final", last.t);
    art.scalar("mass_drift_max", mass_drift);
    art.scalar("mean_x_final", last.density.mean());
    art.scalar("variance_initial", rho0.variance());
    art.scalar("variance_final", last.density.variance());
    if dynamics == Dynamics::Classical {
        let energies: Vec<f64> = snaps
            .iter()
            .map(|s| smoluchowski::classical_free_energy(&s.density, &cfg.potential, &phys))
            .collect::<Result<_, _>>()
            .unwrap_or_default();
        if let (Some(first), Some(final_)) = (energies.first(), energies.last()) {
            art.scalar("free_energy_initial", *first);
            art.scalar("free_energy_final", *final_);
            let monotone = energies.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
            art.scalar("free_energy_monotone", if monotone { 1.0 } else { 0.0 });
        }
    }
    Ok(failure.map_or(Outcome::Done, Outcome::Failed))
}

fn run_schrodinger(cfg: &ScenarioConfig, art: &mut Artifacts) -> Result<Outcome, RunError> {
    let phys = cfg.physical.to_core();
    let psi0 = numeric!(wave_initial(cfg));
    let grid = *psi0.grid();
    let dt = cfg.dt();
    let n = cfg.steps();
    let mut prop = numeric!(SplitStep::new(&grid, &cfg.potential, &phys, dt));
    let e0 = numeric!(quantum::energy(&psi0, &cfg.potential, &phys));
    let mut values = psi0.values().to_vec();
    let mut snaps = vec![(0.0, psi0.clone())];
    let mut norm_drift: f64 = 0.0;
    let mut density = vec![0.0; grid.len()];
    for step in 1..=n {
        prop.step(&mut values);
        density.iter_mut().zip(&values).for_each(|(d, z)| *d = z.norm_sqr());
        norm_drift = norm_drift.max((grid.integrate(&density) - 1.0).abs());
        if step % cfg.output.snapshot_every == 0 || step == n {
            snaps.push((step as f64 * dt, numeric!(WaveFunction::new(grid, values.clone()))));
        }
    }
    let last = snaps.last().expect("initial snapshot").1.clone();
    art.write("wave.csv", |w, h| export::write_wave_snapshots(w, h, &snaps))?;
    let e1 = numeric!(quantum::energy(&last, &cfg.potential, &phys));
    let rho = last.density();
    art.scalar("t_final", n as f64 * dt);
    art.scalar("norm_drift_max", norm_drift);
    art.scalar("energy_initial", e0);
    art.scalar("energy_final", e1);
    art.scalar("mean_x_final", rho.mean());
    art.scalar("variance_final", rho.variance());
    art.scalar("top_band_fraction_final", numeric!(quantum::top_band_fraction(&last)));
    // Same interval with half the step: the distance scales as dt^2.
    let half = numeric!(quantum::split_step_propagate(&psi0, &cfg.potential, &phys, 0.5 * dt, 2 * n));
    art.scalar("step_doubling_distance", numeric!(last.distance(&half)));
    Ok(Outcome::Done)
}

fn run_madelung(cfg: &ScenarioConfig, art: &mut Artifacts) -> Result<Outcome, RunError> {
    let phys = cfg.physical.to_core();
    let psi0 = numeric!(wave_initial(cfg));
    let flow0 = numeric!(madelung_decompose(&psi0, &phys));
    let mut solver = numeric!(MadelungSolver::new(&flow0, &cfg.potential, &phys, cfg.dt()));
    art.scalar("cfl_bound_initial", solver.cfl_bound());
    let mut snaps: Vec<(f64, FlowState)> = vec![(0.0, solver.flow())];
    let n = cfg.steps();
    let mut failure = None;
    while solver.steps() < n {
        let chunk = cfg.output.snapshot_every.min(n - solver.steps());
        if let Err(e) = solver.run(chunk) {
            failure = Some(match e {
                CoreError::NodeFormation { .. } => e,
                other => CoreError::StepFailed {
                    step: solver.steps() + 1,
                    source: Box::new(other),
                },
            });
            snaps.push((solver.time(), solver.flow()));
            break;
        }
        snaps.push((solver.time(), solver.flow()));
    }
    art.write("flow.csv", |w, h| export::write_flow_snapshots(w, h, &snaps))?;
    let (t, flow) = snaps.last().expect("initial snapshot");
    art.scalar("t_final", *t);
    art.scalar("mass_final", flow.density.mass());
    art.scalar("mean_x_final", flow.density.mean());
    art.scalar("variance_final", flow.density.variance());
    if failure.is_none() && flow.grid().is_periodic() {
        let psi = numeric!(quantum::split_step_propagate(&madelung_compose(&flow0, &phys), &cfg.potential, &phys, cfg.dt(), n));
        let metrics = numeric!(quantum::compare_densities(&psi.density(), &flow.density));
        art.scalar("schrodinger_l2_distance", metrics.l2);
    }
    Ok(failure.map_or(Outcome::Done, Outcome::Failed))
}

fn run_equilibrium(cfg: &ScenarioConfig, art: &mut Artifacts) -> Result<Outcome, RunError> {
    let phys = cfg.physical.to_core();
    let grid = numeric!(grid_of(cfg));
    let h = numeric!(thermo::build_hamiltonian(&grid, &cfg.potential, &phys));
    let coldest = cfg.betas().iter().cloned().fold(f64::INFINITY, f64::min);
    let spec = numeric!(SpectralDecomposition::for_beta(&h, coldest));
    art.write("spectrum.csv", |w, h| export::write_spectrum(w, h, spec.energies()))?;
    art.scalar("modes", spec.len() as f64);
    art.scalar("E_0", spec.energies()[0]);
    if spec.len() > 1 {
        art.scalar("E_1", spec.energies()[1]);
    }
    for (j, beta) in cfg.betas().iter().enumerate() {
        let rho = numeric!(thermo::gibbs_density(&spec, *beta));
        art.write(&format!("density_{j}.csv"), |w, h| export::write_equilibrium_density(w, h, &rho))?;
        art.scalar(format!("beta_{j}"), *beta);
        art.scalar(format!("Z_{j}"), numeric!(spec.partition_function(*beta)));
        art.scalar(format!("mean_energy_{j}"), numeric!(spec.mean_energy(*beta)));
        art.scalar(format!("variance_{j}"), rho.variance());
    }
    Ok(Outcome::Done)
}

fn run_dispersion(cfg: &ScenarioConfig, art: &mut Artifacts) -> Result<Outcome, RunError> {
    let phys = cfg.physical.to_core();
    let t_max = cfg.integrator.t_max.expect("validated");
    let dt = cfg.dt();
    let mut curves = Vec::new();
    for (j, beta) in cfg.betas().iter().enumerate() {
        let curve = numeric!(solve_eta_approx(&phys, *beta, t_max, dt));
        let t_end = *curve.times.last().expect("non-empty curve");
        let eta_end = *curve.eta.last().expect("non-empty curve");
        let exact = numeric!(eta_implicit(t_end, *beta, &phys));
        art.scalar(format!("beta_{j}"), *beta);
        art.scalar(format!("eta_final_{j}"), eta_end);
        art.scalar(format!("sigma_final_{j}"), eta_end / phys.mass);
        art.scalar(format!("implicit_rel_diff_{j}"), (eta_end - exact).abs() / exact);
        if let Ok(slope) = fit_slope(&curve.times, &curve.eta, 0.5 * t_end, t_end) {
            art.scalar(format!("late_slope_{j}"), slope);
            art.scalar(format!("einstein_slope_ratio_{j}"), slope * phys.gamma * beta / 2.0);
        }
        curves.push(curve);
    }
    art.write("eta.csv", |w, h| export::write_eta_curves(w, h, &curves, &phys))?;
    if phys.kt > 0.0 {
        let eta = numeric!(eta_implicit(t_max, 1.0 / phys.kt, &phys));
        art.scalar("sigma_final_at_kT", eta / phys.mass);
    }
    if let Some(points) = cfg.integrator.beta_points {
        let beta_max = cfg.betas().iter().cloned().fold(0.0, f64::max);
        let grid = numeric!(log_beta_grid(beta_max, points));
        let family = numeric!(solve_eta_family(&phys, &grid, t_max, dt));
        art.write("family.csv", |w, h| export::write_eta_family(w, h, &family, &phys))?;
        art.scalar("family_endpoint_bound", family.endpoint_bound);
        art.scalar("family_quadrature_error", family.quadrature_error);
    }
    Ok(Outcome::Done)
}
