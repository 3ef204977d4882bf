use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qsmolu_core::model::{Boundary, Grid, Potential};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Regime {
    ClassicalLangevin,
    VelocityNoise,
    Joint,
    Smoluchowski,
    QuantumT0,
    Schrodinger,
    Madelung,
    Equilibrium,
    Dispersion,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::ClassicalLangevin => "classical-langevin",
            Regime::VelocityNoise => "velocity-noise",
            Regime::Joint => "joint",
            Regime::Smoluchowski => "smoluchowski",
            Regime::QuantumT0 => "quantum-t0",
            Regime::Schrodinger => "schrodinger",
            Regime::Madelung => "madelung",
            Regime::Equilibrium => "equilibrium",
            Regime::Dispersion => "dispersion",
        }
    }

    /// Numeric module that runs the regime, for error reports.
    pub fn module(self) -> &'static str {
        match self {
            Regime::ClassicalLangevin | Regime::VelocityNoise | Regime::Joint => "langevin-sim",
            Regime::Smoluchowski | Regime::QuantumT0 => "smoluchowski-pde",
            Regime::Schrodinger | Regime::Madelung => "quantum-dynamics",
            Regime::Equilibrium => "thermo-equilibrium",
            Regime::Dispersion => "dispersion-ode",
        }
    }

    fn is_langevin(self) -> bool {
        matches!(self, Regime::ClassicalLangevin | Regime::VelocityNoise | Regime::Joint)
    }

    fn needs_grid(self) -> bool {
        !matches!(self, Regime::ClassicalLangevin | Regime::Joint | Regime::Dispersion)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalSpec {
    pub hbar: f64,
    pub mass: f64,
    pub gamma: f64,
    #[serde(rename = "kT")]
    pub kt: f64,
}

impl Default for PhysicalSpec {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            gamma: 1.0,
            kt: 1.0,
        }
    }
}

impl PhysicalSpec {
    pub fn to_core(self) -> qsmolu_core::model::PhysicalConfig {
        qsmolu_core::model::PhysicalConfig {
            hbar: self.hbar,
            mass: self.mass,
            gamma: self.gamma,
            kt: self.kt,
        }
    }
}

/// Initial condition. Each regime accepts a subset of the kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Every path starts at `(x, p)`.
    Point {
        x: f64,
        #[serde(default)]
        p: f64,
    },
    /// Gaussian position law with spread `sigma`; momenta `N(p_mean, p_sigma)`
    /// for trajectories, wavenumber `k0` for wave functions.
    Gaussian {
        center: f64,
        sigma: f64,
        #[serde(default)]
        p_mean: f64,
        #[serde(default)]
        p_sigma: f64,
        #[serde(default)]
        k0: f64,
    },
    Uniform,
    /// `exp(-U / kT)` with thermal momenta unless `p_sigma` is given.
    Boltzmann {
        #[serde(default)]
        p_sigma: Option<f64>,
    },
    /// Lowest eigenmode of the grid Hamiltonian.
    GroundState,
}

impl InitialSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            InitialSpec::Point { .. } => "point",
            InitialSpec::Gaussian { .. } => "gaussian",
            InitialSpec::Uniform => "uniform",
            InitialSpec::Boltzmann { .. } => "boltzmann",
            InitialSpec::GroundState => "ground_state",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSpec {
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub paths: Option<usize>,
    pub seed: u64,
    /// Reciprocal temperatures for `equilibrium` and `dispersion`.
    pub beta: Option<Vec<f64>>,
    /// End time. Required for `dispersion`; elsewhere an alternative to
    /// `steps` that must be a whole number of steps.
    pub t_max: Option<f64>,
    /// Size of an optional coupled reciprocal-temperature grid for `dispersion`.
    pub beta_points: Option<usize>,
    /// Constant drift velocity for `velocity-noise`.
    pub drift_velocity: f64,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self {
            dt: None,
            steps: None,
            paths: None,
            seed: 0,
            beta: None,
            t_max: None,
            beta_points: None,
            drift_velocity: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub directory: PathBuf,
    /// Steps between stored snapshots or trajectory records.
    pub snapshot_every: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            snapshot_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub regime: Regime,
    #[serde(default)]
    pub physical: PhysicalSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    #[serde(default = "free")]
    pub potential: Potential,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn free() -> Potential {
    Potential::Free
}

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_PATHS: usize = 1000;

/// One violated constraint, addressed by its dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{path}: {message} (line {line}, column {column})")]
    Schema {
        path: String,
        message: String,
        line: usize,
        column: usize,
    },
    #[error("{} violation(s):\n  {}", .0.len(), .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n  "))]
    Invalid(Vec<Violation>),
}

impl ConfigError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ConfigError::Invalid(v) => v,
            _ => &[],
        }
    }
}

/// Parses and validates a JSON scenario. Structural problems stop at the first
/// error; semantic checks report every violation.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    serde_json::from_str::<serde_json::Value>(text).map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e.to_string()),
    })?;
    let cfg = deserialize_typed(text)?;
    let violations = cfg.violations();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}

fn deserialize_typed(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError::Schema {
            path,
            message: strip_position(&inner.to_string()),
            line: inner.line(),
            column: inner.column(),
        }
    })
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

impl ScenarioConfig {
    /// Hex SHA-256 of the canonical JSON form, without the output directory,
    /// so the same scenario written elsewhere carries the same hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.directory = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn dt(&self) -> f64 {
        self.integrator.dt.unwrap_or(DEFAULT_DT)
    }

    pub fn steps(&self) -> usize {
        match (self.integrator.steps, self.integrator.t_max) {
            (Some(n), _) => n,
            (None, Some(t)) => (t / self.dt()).round() as usize,
            (None, None) => DEFAULT_STEPS,
        }
    }

    pub fn paths(&self) -> usize {
        self.integrator.paths.unwrap_or(DEFAULT_PATHS)
    }

    pub fn betas(&self) -> &[f64] {
        self.integrator.beta.as_deref().unwrap_or(&[])
    }

    /// Every semantic violation, including preflight checks that need the
    /// built initial state (stability bounds, nodes).
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Checks::default();
        let r = self.regime;
        let p = &self.physical;
        v.positive_finite("physical.hbar", p.hbar);
        v.positive_finite("physical.mass", p.mass);
        v.nonneg_finite("physical.gamma", p.gamma);
        v.nonneg_finite("physical.kT", p.kt);

        match r {
            Regime::ClassicalLangevin | Regime::Joint | Regime::Smoluchowski | Regime::QuantumT0 => {
                v.require("physical.gamma", p.gamma > 0.0, "must be > 0 for this regime");
            }
            Regime::Dispersion => v.require("physical.gamma", p.gamma > 0.0, "must be > 0 for this regime"),
            _ => {}
        }
        if r == Regime::Smoluchowski {
            v.require("physical.kT", p.kt > 0.0, "must be > 0 for classical Smoluchowski dynamics");
        }

        self.check_grid(&mut v);
        self.check_potential(&mut v);
        self.check_integrator(&mut v);
        self.check_initial(&mut v);
        v.require("output.snapshot_every", self.output.snapshot_every >= 1, "must be >= 1");

        if v.0.is_empty() {
            if let Err(issue) = crate::run::preflight(self) {
                v.0.push(issue);
            }
        }
        v.0
    }

    fn check_grid(&self, v: &mut Checks) {
        let r = self.regime;
        match &self.grid {
            None if r.needs_grid() => v.push("grid", format!("required for regime {r}")),
            None => {}
            Some(g) => {
                if !(g.x_min.is_finite() && g.x_max.is_finite() && g.x_min < g.x_max) {
                    v.push("grid.x_max", "need finite x_min < x_max");
                }
                if g.n < qsmolu_core::model::MIN_INTERVALS {
                    v.push("grid.n", format!("need at least {} intervals", qsmolu_core::model::MIN_INTERVALS));
                }
                match (r, g.boundary) {
                    (Regime::Schrodinger, Boundary::Reflecting) => v.push("grid.boundary", "schrodinger requires a periodic grid"),
                    (Regime::Equilibrium, Boundary::Periodic) => v.push("grid.boundary", "equilibrium requires a reflecting grid"),
                    _ => {}
                }
            }
        }
    }

    fn check_potential(&self, v: &mut Checks) {
        if let Err(e) = self.potential.validate() {
            v.push("potential", e.to_string());
        }
        if let (Potential::Tabulated(t), Some(g)) = (&self.potential, &self.grid) {
            if t.grid != *g {
                v.push("potential.grid", "tabulated potential must use the scenario grid");
            }
        }
        if self.regime == Regime::Dispersion && self.potential != Potential::Free {
            v.push("potential", "dispersion dynamics is defined for the free particle only");
        }
    }

    fn check_integrator(&self, v: &mut Checks) {
        let r = self.regime;
        let it = &self.integrator;
        let stepped = !matches!(r, Regime::Equilibrium);
        if stepped {
            if let Some(dt) = it.dt {
                v.positive_finite("integrator.dt", dt);
            } else if !r.is_langevin() {
                v.push("integrator.dt", format!("required for regime {r}"));
            }
        }
        if r != Regime::Dispersion && r != Regime::Equilibrium {
            match (it.steps, it.t_max) {
                (Some(_), Some(_)) => v.push("integrator.t_max", "give either steps or t_max, not both"),
                (None, None) if !r.is_langevin() => v.push("integrator.steps", format!("required for regime {r} (or t_max)")),
                (None, Some(t)) => {
                    let n = t / self.dt();
                    if !(t.is_finite() && t > 0.0) || (n - n.round()).abs() > 1e-9 * n.max(1.0) {
                        v.push("integrator.t_max", "must be a positive whole number of steps dt");
                    }
                }
                _ => {}
            }
        }
        if r == Regime::Equilibrium && it.t_max.is_some() {
            v.push("integrator.t_max", "not used by regime equilibrium");
        }
        if r.is_langevin() {
            v.require("integrator.paths", self.paths() >= 1, "must be >= 1");
        }
        if matches!(r, Regime::Equilibrium | Regime::Dispersion) {
            match &it.beta {
                None => v.push("integrator.beta", format!("required for regime {r}")),
                Some(b) if b.is_empty() => v.push("integrator.beta", "must not be empty"),
                Some(b) => {
                    for (i, beta) in b.iter().enumerate() {
                        if !(beta.is_finite() && *beta > 0.0) {
                            v.push(format!("integrator.beta[{i}]"), "must be finite and > 0");
                        }
                    }
                }
            }
        }
        if r == Regime::Dispersion {
            match it.t_max {
                None => v.push("integrator.t_max", "required for regime dispersion"),
                Some(t) => v.positive_finite("integrator.t_max", t),
            }
            if let Some(n) = it.beta_points {
                v.require("integrator.beta_points", n >= 2, "must be >= 2");
            }
        } else if it.beta_points.is_some() {
            v.push("integrator.beta_points", "only used by regime dispersion");
        }
        if r != Regime::VelocityNoise && it.drift_velocity != 0.0 {
            v.push("integrator.drift_velocity", "only used by regime velocity-noise");
        }
        v.require("integrator.drift_velocity", it.drift_velocity.is_finite(), "must be finite");
    }

    fn check_initial(&self, v: &mut Checks) {
        let r = self.regime;
        let Some(init) = &self.initial else {
            if matches!(r, Regime::Equilibrium | Regime::Dispersion | Regime::ClassicalLangevin | Regime::Joint) {
                return;
            }
            v.push("initial", format!("required for regime {r}"));
            return;
        };
        if matches!(r, Regime::Equilibrium | Regime::Dispersion) {
            v.push("initial", format!("not used by regime {r}"));
            return;
        }
        let allowed: &[&str] = match r {
            Regime::ClassicalLangevin | Regime::Joint => &["point", "gaussian", "uniform", "boltzmann", "ground_state"],
            Regime::VelocityNoise | Regime::Smoluchowski | Regime::QuantumT0 => {
                &["gaussian", "uniform", "boltzmann", "ground_state"]
            }
            Regime::Schrodinger | Regime::Madelung => &["gaussian", "ground_state"],
            Regime::Equilibrium | Regime::Dispersion => &[],
        };
        if !allowed.contains(&init.kind()) {
            v.push("initial.kind", format!("`{}` is not accepted by regime {r}; use one of {allowed:?}", init.kind()));
        }
        match init {
            InitialSpec::Point { x, p } => {
                v.require("initial.x", x.is_finite(), "must be finite");
                v.require("initial.p", p.is_finite(), "must be finite");
            }
            InitialSpec::Gaussian { center, sigma, p_mean, p_sigma, k0 } => {
                v.require("initial.center", center.is_finite(), "must be finite");
                if r.is_langevin() && r != Regime::VelocityNoise {
                    v.nonneg_finite("initial.sigma", *sigma);
                } else {
                    v.positive_finite("initial.sigma", *sigma);
                }
                v.require("initial.p_mean", p_mean.is_finite(), "must be finite");
                v.nonneg_finite("initial.p_sigma", *p_sigma);
                v.require("initial.k0", k0.is_finite(), "must be finite");
            }
            InitialSpec::Boltzmann { p_sigma } => {
                v.require("physical.kT", self.physical.kt > 0.0, "boltzmann initial state needs kT > 0");
                if let Some(s) = p_sigma {
                    v.nonneg_finite("initial.p_sigma", *s);
                }
            }
            InitialSpec::Uniform | InitialSpec::GroundState => {}
        }
        let needs_grid = !matches!(init, InitialSpec::Point { .. } | InitialSpec::Gaussian { .. });
        if needs_grid && r.is_langevin() && self.grid.is_none() && r != Regime::VelocityNoise {
            v.push("grid", format!("required for initial kind `{}`", init.kind()));
        }
        if matches!(init, InitialSpec::GroundState) {
            if let Some(g) = &self.grid {
                if g.boundary == Boundary::Periodic {
                    v.push("initial.kind", "ground_state needs a reflecting grid");
                }
            }
        }
    }
}

#[derive(Default)]
struct Checks(Vec<Violation>);

impl Checks {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }

    fn require(&mut self, path: &str, ok: bool, message: &str) {
        if !ok {
            self.push(path, message);
        }
    }

    fn positive_finite(&mut self, path: &str, x: f64) {
        self.require(path, x.is_finite() && x > 0.0, "must be finite and > 0");
    }

    fn nonneg_finite(&mut self, path: &str, x: f64) {
        self.require(path, x.is_finite() && x >= 0.0, "must be finite and >= 0");
    }
}
